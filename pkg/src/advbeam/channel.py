"""Synthetic mmWave channels and omni-received uplink pilot features.

Channels are generated with an L-path geometric model over a uniform planar
array (UPA).  A channel set for one user is a complex array of shape
``(N, K, M)``: base station, subcarrier, antenna.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, DataError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Scenario:
    name: str
    num_bs: int
    upa_rows: int
    upa_cols: int
    num_subcarriers: int
    carrier_freq_ghz: float
    num_paths: int
    los_probability: float
    user_count: int
    grid_extent_m: float
    snr_db: float
    beam_coherence_s: float
    training_time_s: float
    subcarrier_spacing_hz: float = 1.0e6
    los_gain: float = 3.0
    antenna_spacing: float = 0.5
    bs_height_m: float = 6.0
    user_height_m: float = 1.5
    num_beams: int | None = None
    pilot_snr_db: float | None = None
    path_loss_exponent: float = 0.0

    def __post_init__(self) -> None:
        for field in ("num_bs", "upa_rows", "upa_cols", "num_subcarriers",
                      "num_paths", "user_count"):
            if int(getattr(self, field)) < 1:
                raise ConfigError(f"{field} must be a positive integer")
        if not 0.5 <= self.carrier_freq_ghz <= 100.0:
            raise ConfigError("carrier_freq_ghz outside 0.5-100 GHz")
        if not 0.0 <= self.los_probability <= 1.0:
            raise ConfigError("los_probability must lie in [0, 1]")
        if self.grid_extent_m <= 0:
            raise ConfigError("grid_extent_m must be positive")
        if not 0.0 <= self.training_time_s < self.beam_coherence_s:
            raise ConfigError("training time must satisfy 0 <= T_TR < T_B")
        if self.num_beams is not None and self.num_beams < 2:
            raise ConfigError("num_beams must be at least 2")
        if not np.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")

    @property
    def num_antennas(self) -> int:
        return self.upa_rows * self.upa_cols

    @property
    def codebook_size(self) -> int:
        return self.num_beams if self.num_beams is not None else max(2, self.num_antennas)

    @property
    def snr_linear(self) -> float:
        return float(10.0 ** (self.snr_db / 10.0))

    @property
    def pilot_snr_linear(self) -> float:
        db = self.snr_db if self.pilot_snr_db is None else self.pilot_snr_db
        return float(10.0 ** (db / 10.0))

    @property
    def overhead_factor(self) -> float:
        return 1.0 - self.training_time_s / self.beam_coherence_s

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / (self.carrier_freq_ghz * 1e9)

    @property
    def feature_dim(self) -> int:
        return 2 * self.num_bs * self.num_subcarriers

    def at_scale(self, scale: str) -> "Scenario":
        """Return the scenario resized for ``scale`` ("paper" or "desk").

        Desk scale caps the problem at N=4 base stations, a 4x4 array,
        K=8 subcarriers and P=16 beams; frequency and path statistics are kept.
        """
        if scale == "paper":
            return self
        if scale != "desk":
            raise ConfigError(f"unknown scale {scale!r}")
        return dataclasses.replace(
            self, num_bs=min(self.num_bs, 4), upa_rows=4, upa_cols=4,
            num_subcarriers=8, num_beams=16,
            user_count=min(self.user_count, 10_000))


PRESETS: dict[str, Scenario] = {
    "outdoor-o1": Scenario(
        name="outdoor-o1", num_bs=18, upa_rows=16, upa_cols=16,
        num_subcarriers=64, carrier_freq_ghz=60.0, num_paths=3,
        los_probability=0.9, user_count=1_000_000, grid_extent_m=60.0,
        snr_db=10.0, pilot_snr_db=30.0, beam_coherence_s=10e-3, training_time_s=1e-3),
    "outdoor-los-nlos": Scenario(
        name="outdoor-los-nlos", num_bs=1, upa_rows=8, upa_cols=8,
        num_subcarriers=64, carrier_freq_ghz=3.5, num_paths=3,
        los_probability=0.7, user_count=100_000, grid_extent_m=60.0,
        snr_db=10.0, pilot_snr_db=30.0, beam_coherence_s=10e-3, training_time_s=1e-3),
    "indoor-mimo": Scenario(
        name="indoor-mimo", num_bs=1, upa_rows=8, upa_cols=8,
        num_subcarriers=64, carrier_freq_ghz=2.5, num_paths=3,
        los_probability=0.95, user_count=10_000, grid_extent_m=10.0,
        snr_db=10.0, pilot_snr_db=30.0, beam_coherence_s=10e-3, training_time_s=1e-3,
        bs_height_m=2.5, user_height_m=1.0),
}


def build_scenario(config: str | Mapping[str, Any] | Scenario,
                   scale: str = "paper") -> Scenario:
    """Build a validated scenario from a preset name or a parameter mapping.

    A mapping may name a ``preset`` to start from and override any field.
    """
    if isinstance(config, Scenario):
        return config.at_scale(scale)
    if isinstance(config, str):
        if config not in PRESETS:
            raise ConfigError(f"unknown scenario preset {config!r}")
        return PRESETS[config].at_scale(scale)
    params = dict(config)
    preset = params.pop("preset", None)
    known = {f.name for f in dataclasses.fields(Scenario)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
    try:
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown scenario preset {preset!r}")
            scenario = dataclasses.replace(PRESETS[preset].at_scale(scale), **params)
        else:
            scenario = Scenario(**params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return scenario


def steering_vector(upa_rows: int, upa_cols: int, azimuth: float,
                    elevation: float, spacing: float = 0.5) -> np.ndarray:
    """UPA array response with entries exp(j*phase)/sqrt(M), row-major order."""
    if upa_rows < 1 or upa_cols < 1:
        raise ConfigError("array must have at least one element")
    a = np.arange(upa_rows)[:, None]
    b = np.arange(upa_cols)[None, :]
    phase = 2.0 * np.pi * spacing * (
        a * np.sin(azimuth) * np.cos(elevation) + b * np.sin(elevation))
    return (np.exp(1j * phase) / np.sqrt(upa_rows * upa_cols)).ravel()


def omni_beam(num_antennas: int) -> np.ndarray:
    return np.full(num_antennas, 1.0 / np.sqrt(num_antennas), dtype=complex)


def bs_layout(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Base-station positions (N, 3) and broadside azimuths (N,).

    Stations sit on a circle around the user grid and face its centre.
    """
    n = scenario.num_bs
    half = scenario.grid_extent_m / 2.0
    radius = half * np.sqrt(2.0) + 5.0
    angles = 2.0 * np.pi * np.arange(n) / n + np.pi / 4.0
    pos = np.stack([half + radius * np.cos(angles),
                    half + radius * np.sin(angles),
                    np.full(n, scenario.bs_height_m)], axis=1)
    facing = np.arctan2(half - pos[:, 1], half - pos[:, 0])
    return pos, facing


def _check_position(scenario: Scenario, user_position) -> np.ndarray:
    p = np.asarray(user_position, dtype=float)
    if p.shape != (2,):
        raise ConfigError("user_position must be an (x, y) pair")
    if np.any(p < 0) or np.any(p > scenario.grid_extent_m):
        raise ConfigError("user_position lies outside the user grid")
    return p


@dataclass(frozen=True)
class Environment:
    """Seeded propagation environment shared by every user of a dataset.

    Holds, per base station, ``L - 1`` point scatterers with CN(0, 1) gains
    (all ``L`` paths are scattered when the line of sight is blocked) and a
    coarse LOS blockage map over the user grid.
    """
    scatterers: np.ndarray   # (N, L, 3) positions
    gains: np.ndarray        # (N, L) complex
    los_map: np.ndarray      # (N, cells, cells) bool, True = LOS available
    cell_m: float


BLOCKAGE_CELLS = 6


def sample_environment(scenario: Scenario, seed: int | None = None) -> Environment:
    rng = np.random.default_rng(seed)
    n, l = scenario.num_bs, scenario.num_paths
    ext = scenario.grid_extent_m
    xy = rng.uniform(-0.25 * ext, 1.25 * ext, size=(n, l, 2))
    z = rng.uniform(0.0, scenario.bs_height_m, size=(n, l, 1))
    gains = (rng.standard_normal((n, l)) + 1j * rng.standard_normal((n, l))) / np.sqrt(2)
    los_map = rng.random((n, BLOCKAGE_CELLS, BLOCKAGE_CELLS)) < scenario.los_probability
    return Environment(np.concatenate([xy, z], axis=2), gains, los_map, ext / BLOCKAGE_CELLS)


def _local_angles(vec: np.ndarray, facing: float) -> tuple[float, float]:
    horiz = np.hypot(vec[0], vec[1])
    rel = np.arctan2(vec[1], vec[0]) - facing
    return float(np.arctan2(np.sin(rel), np.cos(rel))), float(np.arctan2(vec[2], horiz))


def sample_channel(scenario: Scenario, user_position, seed: int | None = None,
                   *, force_los: bool | None = None,
                   environment: Environment | None = None) -> np.ndarray:
    """The (N, K, M) channel of one user.

    ``h_{k,n} = sqrt(M/L) sum_l a_l exp(-j 2 pi k tau_l df) conj(a(phi_l, theta_l))``.
    The environment (scatterers, gains, blockage) comes from ``seed`` unless
    given explicitly, so the channel is a deterministic function of
    position and seed.  A line-of-sight path, when not blocked, has the
    deterministic gain ``los_gain`` and replaces the first scatterer.  The
    conjugate array response makes ``h.T @ g`` peak for the beam steered at
    the departure angle.
    """
    pos = _check_position(scenario, user_position)
    env = sample_environment(scenario, seed) if environment is None else environment
    bs_pos, facing = bs_layout(scenario)
    n_bs, n_sc, n_paths = scenario.num_bs, scenario.num_subcarriers, scenario.num_paths
    rows, cols = scenario.upa_rows, scenario.upa_cols
    m = rows * cols
    k = np.arange(n_sc)
    user = np.array([pos[0], pos[1], scenario.user_height_m])
    cell = np.minimum((pos // env.cell_m).astype(int), BLOCKAGE_CELLS - 1)
    ref_m = scenario.grid_extent_m

    h = np.zeros((n_bs, n_sc, m), dtype=complex)
    for n in range(n_bs):
        los = bool(env.los_map[n, cell[0], cell[1]]) if force_los is None else force_los
        for l in range(n_paths):
            if los and l == 0:
                d = user - bs_pos[n]
                az, el = _local_angles(d, facing[n])
                gain = scenario.los_gain
                length = np.linalg.norm(d)
            else:
                s = env.scatterers[n, l]
                az, el = _local_angles(s - bs_pos[n], facing[n])
                gain = env.gains[n, l]
                length = np.linalg.norm(s - bs_pos[n]) + np.linalg.norm(user - s)
            delay = length / SPEED_OF_LIGHT
            if scenario.path_loss_exponent:
                gain = gain * (ref_m / length) ** (scenario.path_loss_exponent / 2.0)
            a = np.conj(steering_vector(rows, cols, az, el, scenario.antenna_spacing))
            tone = np.exp(-2j * np.pi * k * delay * scenario.subcarrier_spacing_hz)
            h[n] += gain * tone[:, None] * a[None, :]
    return np.sqrt(m / n_paths) * h


def omni_pilot_features(channels: np.ndarray, beam: np.ndarray, sigma2: float,
                        seed: int | None = None) -> np.ndarray:
    """Omni-combined uplink pilots h_{k,n}^T w + v with v ~ CN(0, sigma2); shape (N, K)."""
    channels = np.asarray(channels)
    beam = np.asarray(beam)
    if channels.shape[-1] != beam.shape[0]:
        raise DataError("omni beam length does not match antenna count")
    if sigma2 < 0:
        raise ConfigError("sigma2 must be non-negative")
    clean = channels @ beam
    if sigma2 == 0:
        return clean
    return clean + pilot_noise(clean.shape, sigma2, seed)


def pilot_noise(shape: tuple[int, ...], sigma2: float, seed: int | None = None) -> np.ndarray:
    """Circular complex Gaussian noise with variance ``sigma2``."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return np.sqrt(sigma2 / 2.0) * noise


def flatten_complex(values: np.ndarray) -> np.ndarray:
    """Flatten complex values (row-major) to a real vector with re/im interleaved."""
    flat = np.asarray(values, dtype=complex).ravel()
    out = np.empty(2 * flat.size)
    out[0::2] = flat.real
    out[1::2] = flat.imag
    return out


def unflatten_complex(flat: np.ndarray, shape: tuple[int, ...] | None = None) -> np.ndarray:
    flat = np.asarray(flat, dtype=float)
    if flat.shape[-1] % 2:
        raise DataError("interleaved vector must have even length")
    values = flat[..., 0::2] + 1j * flat[..., 1::2]
    return values.reshape(shape) if shape is not None else values


CHANNEL_CSV_HEADER = ["user_id", "bs", "subcarrier", "antenna", "re", "im"]


def write_channels_csv(path: str | Path, channels: Mapping[int, np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHANNEL_CSV_HEADER)
        for uid in sorted(channels):
            h = np.asarray(channels[uid])
            for (n, k, m), z in np.ndenumerate(h):
                writer.writerow([uid, n, k, m, repr(float(z.real)), repr(float(z.imag))])


def load_channels_csv(path: str | Path) -> dict[int, np.ndarray]:
    """Read imported channels; every user must cover the full (bs, subcarrier, antenna) grid."""
    entries: dict[int, dict[tuple[int, int, int], complex]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CHANNEL_CSV_HEADER:
            raise DataError(f"bad channel CSV header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise DataError(f"line {lineno}: expected 6 columns")
            try:
                uid, n, k, m = (int(v) for v in row[:4])
                z = complex(float(row[4]), float(row[5]))
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from exc
            if min(n, k, m) < 0 or not np.isfinite(z):
                raise DataError(f"line {lineno}: invalid index or value")
            cells = entries.setdefault(uid, {})
            if (n, k, m) in cells:
                raise DataError(f"line {lineno}: duplicate coefficient")
            cells[(n, k, m)] = z

    out: dict[int, np.ndarray] = {}
    dims = None
    for uid, cells in entries.items():
        shape = tuple(max(idx[i] for idx in cells) + 1 for i in range(3))
        if dims is None:
            dims = shape
        if shape != dims or len(cells) != int(np.prod(shape)):
            raise DataError(f"user {uid}: incomplete bs x subcarrier x antenna grid")
        h = np.zeros(shape, dtype=complex)
        for idx, z in cells.items():
            h[idx] = z
        out[uid] = h
    return out
