"""Beam-steering codebooks, per-beam achievable rates and the genie oracle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering_vector
from .errors import ConfigError


@dataclass(frozen=True)
class Codebook:
    beams: np.ndarray   # (P, M) complex, unit norm
    angles: np.ndarray  # (P,) azimuths, uniform over [-pi/2, pi/2)

    @property
    def size(self) -> int:
        return self.beams.shape[0]

    def permuted(self, order) -> "Codebook":
        order = np.asarray(order)
        return Codebook(self.beams[order], self.angles[order])


@dataclass(frozen=True)
class EffectiveRate:
    value: float
    overhead_factor: float


def build_codebook(upa_rows: int, upa_cols: int, num_beams: int | None = None,
                   spacing: float = 0.5) -> Codebook:
    """Steering codebook at ``num_beams`` quantized azimuths (zero elevation).

    ``num_beams`` defaults to the antenna count.
    """
    m = upa_rows * upa_cols
    p = m if num_beams is None else num_beams
    if p < 2:
        raise ConfigError("codebook needs at least two beams")
    if m < 1:
        raise ConfigError("array must have at least one element")
    angles = -np.pi / 2 + np.pi * np.arange(p) / p
    beams = np.stack([steering_vector(upa_rows, upa_cols, az, 0.0, spacing) for az in angles])
    return Codebook(beams, angles)


def beam_gains(channels: np.ndarray, codebook: Codebook) -> np.ndarray:
    """|h_{k,n}^T g_p|^2 for every (n, k, p)."""
    return np.abs(np.asarray(channels) @ codebook.beams.T) ** 2


def per_beam_rate(channels: np.ndarray, codebook: Codebook, beam_index: int,
                  snr: float, bs: int = 0) -> float:
    """(1/K) sum_k log2(1 + snr |h_{k,n}^T g_p|^2) for station ``bs``."""
    if not 0 <= beam_index < codebook.size:
        raise IndexError(f"beam index {beam_index} out of range")
    if snr < 0:
        raise ValueError("snr must be non-negative")
    h = np.asarray(channels)[bs]
    gain = np.abs(h @ codebook.beams[beam_index]) ** 2
    return float(np.mean(np.log2(1.0 + snr * gain)))


def rate_targets(channels: np.ndarray, codebook: Codebook, snr: float) -> np.ndarray:
    """Per-beam rate summed over base stations, shape (P,).

    Every station applies codebook beam p; entry p is
    sum_n (1/K) sum_k log2(1 + snr |h_{k,n}^T g_p|^2).
    """
    if snr < 0:
        raise ValueError("snr must be non-negative")
    rates = np.log2(1.0 + snr * beam_gains(channels, codebook))
    return rates.mean(axis=1).sum(axis=0)


def genie_best_beam(channels: np.ndarray, codebook: Codebook, snr: float) -> tuple[int, float]:
    """Exhaustive search; ties go to the smallest index."""
    rates = rate_targets(channels, codebook, snr)
    best = int(np.argmax(rates))
    return best, float(rates[best])


def effective_rate(sum_rate: float, training_time: float, beam_coherence: float) -> EffectiveRate:
    if beam_coherence <= 0 or not 0.0 <= training_time < beam_coherence:
        raise ValueError("need 0 <= T_TR < T_B")
    factor = 1.0 - training_time / beam_coherence
    return EffectiveRate(factor * sum_rate, factor)


def coherent_sum_rate(channels: np.ndarray, beams: np.ndarray, snr: float,
                      precoder: np.ndarray | None = None) -> float:
    """sum_k log2(1 + snr |sum_n h_{k,n}^T f_n c_n|^2).

    ``beams`` holds one beam per station, shape (N, M).  The precoder
    defaults to the equal split c_n = 1/sqrt(N) and the pilot symbol is 1.
    """
    h = np.asarray(channels)
    n_bs = h.shape[0]
    c = np.full(n_bs, 1.0 / np.sqrt(n_bs)) if precoder is None else np.asarray(precoder)
    combined = np.einsum("nkm,nm,n->k", h, np.asarray(beams), c)
    return float(np.sum(np.log2(1.0 + snr * np.abs(combined) ** 2)))
