"""Datasets, the three-case epsilon sweep, and CSV/plot reports."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .adversarial import AdvTrainParams, AttackParams, adversarial_training, complex_fgsm, default_alpha
from .beamforming import build_codebook, effective_rate, rate_targets
from .channel import (Scenario, flatten_complex, omni_beam, omni_pilot_features, pilot_noise,
                      sample_channel, sample_environment)
from .errors import ConfigError, DataError
from .nn import MlpModel, TrainConfig, TrainHistory, forward, init_model, mse_loss, split_indices, train

CASES = ("undefended", "undefended_attacked", "defended_attacked")
DEFAULT_EPS_GRID = tuple([round(0.01 * i, 2) for i in range(11)] + [0.2, 0.3, 0.4, 0.5])
DATASET_FORMAT_VERSION = 1


@dataclass
class BeamDataset:
    inputs: np.ndarray    # (n, 2NK) interleaved pilots divided by input_scale
    targets: np.ndarray   # (n, P) rates / r_max
    rates: np.ndarray     # (n, P) un-normalized rates, bits/s/Hz
    r_max: float
    input_scale: float
    scenario: str
    snr: float
    sigma2: float
    seed: int

    def __len__(self) -> int:
        return len(self.inputs)

    def subset(self, idx) -> "BeamDataset":
        return BeamDataset(self.inputs[idx], self.targets[idx], self.rates[idx], self.r_max,
                           self.input_scale, self.scenario, self.snr, self.sigma2, self.seed)


def build_dataset(scenario: Scenario, n_samples: int, seed: int = 0) -> BeamDataset:
    """Sample user positions, channels, noisy omni pilots and per-beam rate targets.

    Pilot noise power is set so that the mean noiseless pilot power over the
    set sits ``pilot_snr_db`` above it.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, scenario.grid_extent_m, size=(n_samples, 2))
    env = sample_environment(scenario, int(rng.integers(2**63)))
    noise_seeds = rng.integers(2**63, size=n_samples)
    codebook = build_codebook(scenario.upa_rows, scenario.upa_cols, scenario.codebook_size,
                              scenario.antenna_spacing)
    omni = omni_beam(scenario.num_antennas)
    snr = scenario.snr_linear

    clean = np.empty((n_samples, scenario.num_bs, scenario.num_subcarriers), dtype=complex)
    rates = np.empty((n_samples, codebook.size))
    for i in range(n_samples):
        h = sample_channel(scenario, positions[i], environment=env)
        clean[i] = omni_pilot_features(h, omni, 0.0)
        rates[i] = rate_targets(h, codebook, snr)
    sigma2 = float(np.mean(np.abs(clean) ** 2)) / scenario.pilot_snr_linear
    feats = np.stack([flatten_complex(clean[i] + pilot_noise(clean[i].shape, sigma2,
                                                             int(noise_seeds[i])))
                      for i in range(n_samples)])
    input_scale = float(np.max(np.abs(feats))) or 1.0
    r_max = float(rates.max()) or 1.0
    return BeamDataset(feats / input_scale, rates / r_max, rates, r_max, input_scale,
                       scenario.name, snr, sigma2, seed)


def split_dataset(dataset: BeamDataset, seed: int, test_fraction: float = 0.2,
                  val_fraction: float = 0.1) -> tuple[BeamDataset, BeamDataset, BeamDataset]:
    """Train / validation / test split; validation is cut from the non-test part."""
    rest, test = split_indices(len(dataset), test_fraction, seed)
    tr, va = split_indices(len(rest), val_fraction, seed + 1)
    return dataset.subset(rest[tr]), dataset.subset(rest[va]), dataset.subset(test)


def _finish(model: MlpModel, dataset: BeamDataset) -> MlpModel:
    model.r_max = dataset.r_max
    model.input_scale = dataset.input_scale
    return model


def train_undefended(train_set: BeamDataset, val_set: BeamDataset,
                     config: TrainConfig) -> tuple[MlpModel, "TrainHistory"]:
    model = init_model(train_set.inputs.shape[1], train_set.targets.shape[1], config.seed)
    model, history = train(model, train_set.inputs, train_set.targets, config,
                           validation=(val_set.inputs, val_set.targets))
    return _finish(model, train_set), history


def train_defended(train_set: BeamDataset, val_set: BeamDataset, config: TrainConfig,
                   adv: AdvTrainParams):
    model = init_model(train_set.inputs.shape[1], train_set.targets.shape[1], config.seed)
    model.r_max, model.input_scale = train_set.r_max, train_set.input_scale
    result = adversarial_training(train_set.inputs, train_set.targets, config, adv,
                                  validation=(val_set.inputs, val_set.targets), model=model)
    _finish(result.model, train_set)
    return result


def predicted_beam_rates(model: MlpModel, inputs: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Rate of the beam with the largest predicted output (ties -> smallest index)."""
    if not model.is_trained:
        raise ConfigError("model has no normalization constant; train it first")
    pred = np.atleast_2d(forward(model, inputs))
    rates = np.atleast_2d(rates)
    best = np.argmax(pred, axis=1)
    out = rates[np.arange(len(rates)), best]
    return out if np.ndim(inputs) == 2 else out[:1]


def predicted_beam_rate(model: MlpModel, inputs: np.ndarray, rates: np.ndarray) -> float:
    return float(predicted_beam_rates(model, inputs, rates).mean())


def compute_mse(model: MlpModel, inputs: np.ndarray, targets: np.ndarray,
                attack: AttackParams | None = None, alpha: float | None = None) -> float:
    if attack is not None:
        inputs = complex_fgsm(inputs, targets, model, attack, alpha)
    return mse_loss(forward(model, inputs), targets)


@dataclass
class SweepConfig:
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_samples: int = 5000
    test_fraction: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackParams = field(default_factory=lambda: AttackParams(0.1))
    adv: AdvTrainParams = field(default_factory=AdvTrainParams)
    cases: tuple[str, ...] = CASES

    def __post_init__(self) -> None:
        grid = tuple(float(e) for e in self.eps_grid)
        if not grid or any(e < 0 for e in grid) or list(grid) != sorted(grid):
            raise ConfigError("eps_grid must be non-empty, non-negative and sorted")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        unknown = set(self.cases) - set(CASES)
        if unknown:
            raise ConfigError(f"unknown cases: {sorted(unknown)}")
        self.eps_grid = grid


@dataclass
class SweepRow:
    scenario: str
    case: str
    epsilon: float
    seed_count: int
    mean_rate: float
    rate_std: float
    mse: float
    mse_std: float
    genie_rate: float
    overhead_rate: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    cells: list[dict]                      # one entry per (scenario, case, epsilon, seed)
    metadata: dict = field(default_factory=dict)

    def select(self, scenario: str, case: str) -> list[SweepRow]:
        return sorted((r for r in self.rows if r.scenario == scenario and r.case == case),
                      key=lambda r: r.epsilon)

    @property
    def scenarios(self) -> list[str]:
        return list(dict.fromkeys(r.scenario for r in self.rows))


def _attack_for(template: AttackParams, epsilon: float) -> AttackParams:
    return AttackParams(epsilon, template.alpha, template.max_iters, template.seed)


def run_seed(scenario: Scenario, seed: int, config: SweepConfig) -> list[dict]:
    """All (case, epsilon) cells of one repetition."""
    dataset = build_dataset(scenario, config.n_samples, seed)
    tr, va, te = split_dataset(dataset, seed, config.test_fraction)
    train_cfg = TrainConfig(**{**config.train.__dict__, "seed": seed})
    models: dict[str, MlpModel] = {}
    if {"undefended", "undefended_attacked"} & set(config.cases):
        models["undefended"], _ = train_undefended(tr, va, train_cfg)
    if "defended_attacked" in config.cases:
        models["defended"] = train_defended(tr, va, train_cfg, config.adv).model
    alphas = {name: (config.attack.alpha if config.attack.alpha is not None
                     else default_alpha(m, va.inputs, va.targets))
              for name, m in models.items()}

    genie = float(te.rates.max(axis=1).mean())
    overhead = effective_rate(genie, scenario.training_time_s, scenario.beam_coherence_s).value
    cells = []
    clean_cache: dict[str, tuple[float, float]] = {}
    for case in config.cases:
        name = "defended" if case == "defended_attacked" else "undefended"
        model = models[name]
        for eps in config.eps_grid:
            if case == "undefended":
                if name not in clean_cache:
                    clean_cache[name] = (predicted_beam_rate(model, te.inputs, te.rates),
                                         compute_mse(model, te.inputs, te.targets))
                rate, mse = clean_cache[name]
                max_pert = 0.0
            else:
                x_adv = complex_fgsm(te.inputs, te.targets, model,
                                     _attack_for(config.attack, eps), alphas[name])
                rate = predicted_beam_rate(model, x_adv, te.rates)
                mse = compute_mse(model, x_adv, te.targets)
                max_pert = float(np.max(np.abs(x_adv - te.inputs)))
            cells.append({"scenario": scenario.name, "case": case, "epsilon": eps,
                          "seed": seed, "rate": rate, "mse": mse, "genie_rate": genie,
                          "overhead_rate": overhead, "max_perturbation": max_pert})
    return cells


def _mean_std(values: list[float]) -> tuple[float, float]:
    # fsum is exactly rounded, so the result does not depend on seed order
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)


def aggregate(cells: list[dict]) -> list[SweepRow]:
    groups: dict[tuple, list[dict]] = {}
    for c in cells:
        groups.setdefault((c["scenario"], c["case"], c["epsilon"]), []).append(c)
    case_order = {c: i for i, c in enumerate(CASES)}
    scen_order = {s: i for i, s in enumerate(dict.fromkeys(c["scenario"] for c in cells))}
    rows = []
    for (scen, case, eps), group in sorted(
            groups.items(), key=lambda kv: (scen_order[kv[0][0]], case_order[kv[0][1]], kv[0][2])):
        rate, rate_std = _mean_std([g["rate"] for g in group])
        mse, mse_std = _mean_std([g["mse"] for g in group])
        genie, _ = _mean_std([g["genie_rate"] for g in group])
        overhead, _ = _mean_std([g["overhead_rate"] for g in group])
        rows.append(SweepRow(scen, case, eps, len(group), rate, rate_std, mse, mse_std,
                             genie, overhead))
    return rows


def run_sweep(scenario: Scenario, config: SweepConfig | None = None, jobs: int = 1) -> SweepResult:
    """Three-case evaluation over the epsilon grid, averaged over seeds."""
    config = SweepConfig() if config is None else config
    seeds = sorted(set(int(s) for s in config.seeds))
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            per_seed = list(pool.map(run_seed, [scenario] * len(seeds), seeds,
                                     [config] * len(seeds)))
    else:
        per_seed = [run_seed(scenario, s, config) for s in seeds]
    cells = [c for chunk in per_seed for c in chunk]
    metadata = {"scenario": asdict(scenario), "seeds": seeds,
                "defense_epsilon": config.adv.attack.epsilon,
                "eps_grid": list(config.eps_grid), "n_samples": config.n_samples}
    return SweepResult(aggregate(cells), cells, metadata)


def merge_results(results: list[SweepResult]) -> SweepResult:
    return SweepResult([r for res in results for r in res.rows],
                       [c for res in results for c in res.cells],
                       {"runs": [res.metadata for res in results]})


SWEEP_HEADER = ["scenario", "case", "epsilon", "seed_count", "mean_rate", "rate_std", "mse",
                "genie_rate", "overhead_rate"]
MSE_HEADER = ["scenario", "case", "epsilon", "mse_mean", "mse_std"]


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def sweep_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for r in result.rows:
        writer.writerow([_fmt(getattr(r, k)) for k in SWEEP_HEADER])
    return buf.getvalue()


def mse_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MSE_HEADER)
    for r in result.rows:
        writer.writerow([r.scenario, r.case, _fmt(r.epsilon), _fmt(r.mse), _fmt(r.mse_std)])
    return buf.getvalue()


def read_sweep_csv(sweep_path: str | Path, mse_path: str | Path | None = None) -> SweepResult:
    """Rebuild a result (rows only) from written CSVs."""
    std = {}
    if mse_path is not None and Path(mse_path).exists():
        with open(mse_path, newline="") as fh:
            for row in csv.DictReader(fh):
                std[(row["scenario"], row["case"], float(row["epsilon"]))] = float(row["mse_std"])
    rows = []
    with open(sweep_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_HEADER:
            raise DataError(f"{sweep_path}: unexpected header {reader.fieldnames}")
        for row in reader:
            key = (row["scenario"], row["case"], float(row["epsilon"]))
            rows.append(SweepRow(row["scenario"], row["case"], key[2], int(row["seed_count"]),
                                 float(row["mean_rate"]), float(row["rate_std"]),
                                 float(row["mse"]), std.get(key, 0.0),
                                 float(row["genie_rate"]), float(row["overhead_rate"])))
    return SweepResult(rows, [])


def plot_scenario(result: SweepResult, scenario: str, path: str | Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "advbeam"
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = {"undefended": "Undefended", "undefended_attacked": "Undefended under attack",
              "defended_attacked": "Defended under attack"}
    ref = None
    for case in CASES:
        rows = result.select(scenario, case)
        if not rows:
            continue
        ref = rows
        ax.plot([r.epsilon for r in rows], [r.mean_rate for r in rows], marker="o",
                markersize=3, label=labels[case])
    if ref:
        eps = [r.epsilon for r in ref]
        genie, overhead = ref[0].genie_rate, ref[0].overhead_rate
        ax.axhline(genie, color="k", linestyle="--", linewidth=1, label="Genie-aided")
        ax.axhline(overhead, color="tab:red", linestyle=":", linewidth=1, label="Overhead limit")
        ax.fill_between([eps[0], eps[-1]], overhead, genie, color="tab:green", alpha=0.15)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("achievable rate (bits/s/Hz)")
    ax.set_title(scenario)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(result: SweepResult, out_dir: str | Path, plots: bool = True) -> list[Path]:
    if not result.rows:
        raise DataError("sweep result is empty")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "sweep.csv", out / "mse.csv"]
        written[0].write_text(sweep_csv(result))
        written[1].write_text(mse_csv(result))
        if plots:
            for scen in result.scenarios:
                path = out / f"rate_vs_eps_{scen}.svg"
                plot_scenario(result, scen, path)
                written.append(path)
    except OSError as exc:
        raise DataError(f"cannot write report to {out}: {exc}") from exc
    return written


def save_dataset(dataset: BeamDataset, path: str | Path) -> None:
    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "scenario": dataset.scenario, "seed": dataset.seed, "snr": dataset.snr,
        "sigma2": dataset.sigma2, "r_max": dataset.r_max, "input_scale": dataset.input_scale,
        "n_samples": len(dataset), "input_dim": int(dataset.inputs.shape[1]),
        "output_dim": int(dataset.rates.shape[1]),
        "inputs": dataset.inputs.tolist(), "rates": dataset.rates.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_dataset(path: str | Path) -> BeamDataset:
    try:
        doc = json.loads(Path(path).read_text())
        if not isinstance(doc, dict):
            raise DataError(f"{path}: dataset file must hold a JSON object")
        if doc.get("format_version") != DATASET_FORMAT_VERSION:
            raise DataError(f"unsupported dataset format_version {doc.get('format_version')!r}")
        inputs = np.array(doc["inputs"], dtype=float)
        rates = np.array(doc["rates"], dtype=float)
        n, d_in, d_out = doc["n_samples"], doc["input_dim"], doc["output_dim"]
        r_max = float(doc["r_max"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: corrupt dataset ({exc})") from exc
    if inputs.shape != (n, d_in) or rates.shape != (n, d_out) or r_max <= 0:
        raise DataError(f"{path}: array shapes do not match declared dimensions")
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(rates))):
        raise DataError(f"{path}: non-finite values")
    return BeamDataset(inputs, rates / r_max, rates, r_max, float(doc["input_scale"]),
                       doc["scenario"], float(doc["snr"]), float(doc["sigma2"]), int(doc["seed"]))


ADV_DUMP_HEADER = ["sample_id", "component_index", "clean_re_or_im", "adv_re_or_im"]


def write_adversarial_dump(path: str | Path, clean: np.ndarray, adv: np.ndarray) -> None:
    """One row per interleaved real component, for auditing perturbations."""
    clean = np.atleast_2d(np.asarray(clean, dtype=float))
    adv = np.atleast_2d(np.asarray(adv, dtype=float))
    if clean.shape != adv.shape:
        raise DataError("clean and adversarial arrays differ in shape")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ADV_DUMP_HEADER)
        for i in range(clean.shape[0]):
            for j in range(clean.shape[1]):
                writer.writerow([i, j, repr(float(clean[i, j])), repr(float(adv[i, j]))])
