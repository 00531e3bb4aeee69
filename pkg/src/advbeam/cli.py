"""Command-line front end: generate, train, attack, defend, sweep, report."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .adversarial import AdvTrainParams, AttackParams, complex_fgsm, default_alpha
from .channel import PRESETS, Scenario, build_scenario
from .errors import ConfigError, DataError, NumericError
from .experiments import (DEFAULT_EPS_GRID, SweepConfig, build_dataset, compute_mse, emit_report,
                          load_dataset, merge_results, predicted_beam_rate, read_sweep_csv,
                          run_sweep, save_dataset, split_dataset, train_defended,
                          train_undefended, write_adversarial_dump)
from .nn import TrainConfig, load_model, save_model

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SCALE_DEFAULTS = {"desk": {"n_samples": 5000, "repetitions": 5},
                  "paper": {"n_samples": 35000, "repetitions": 20}}


@dataclass
class RunConfig:
    scenarios: list = field(default_factory=lambda: list(PRESETS))
    scale: str = "desk"
    n_samples: int | None = None
    repetitions: int | None = None
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: AttackParams = field(default_factory=lambda: AttackParams(0.1))
    defense: AdvTrainParams = field(default_factory=AdvTrainParams)
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    test_fraction: float = 0.2
    out: str = "runs"

    def __post_init__(self) -> None:
        if self.scale not in SCALE_DEFAULTS:
            raise ConfigError(f"scale must be one of {sorted(SCALE_DEFAULTS)}")
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        grid = [float(e) for e in self.eps_grid]
        if not grid or min(grid) < 0 or grid != sorted(grid):
            raise ConfigError("eps_grid must be non-empty, non-negative and sorted")
        self.eps_grid = tuple(grid)
        defaults = SCALE_DEFAULTS[self.scale]
        self.n_samples = defaults["n_samples"] if self.n_samples is None else int(self.n_samples)
        if self.repetitions is None:
            self.repetitions = defaults["repetitions"]
        if self.n_samples < 1 or self.repetitions < 1:
            raise ConfigError("n_samples and repetitions must be >= 1")
        self.resolved = [build_scenario(s, self.scale) for s in self.scenarios]

    @property
    def scenario(self) -> Scenario:
        return self.resolved[0]

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(self.seed + i for i in range(self.repetitions))

    def train_config(self, seed: int | None = None) -> TrainConfig:
        seed = self.seed if seed is None else seed
        return dataclasses.replace(self.train, seed=seed)

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(eps_grid=self.eps_grid, seeds=self.seeds, n_samples=self.n_samples,
                           test_fraction=self.test_fraction, train=self.train,
                           attack=self.attack, adv=self.defense)


def _build(cls, doc: Any, what: str):
    if doc is None:
        return cls() if cls is not AttackParams else cls(0.1)
    if not isinstance(doc, dict):
        raise ConfigError(f"'{what}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{what}': {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(f"bad '{what}' section: {exc}") from exc


def load_run_config(path: str | None, overrides: dict[str, Any]) -> RunConfig:
    """Read a JSON config (all keys optional) and apply command-line overrides."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known - {"scenario"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "scenario" in doc:
        doc["scenarios"] = [doc.pop("scenario")]
    doc["train"] = _build(TrainConfig, doc.get("train"), "train")
    doc["attack"] = _build(AttackParams, {"epsilon": 0.1, **doc.get("attack", {})}, "attack")
    defense = dict(doc.get("defense", {}))
    defense_attack = {"epsilon": 0.1, "alpha": doc["attack"].alpha,
                      "max_iters": doc["attack"].max_iters, **defense.pop("attack", {})}
    if "epsilon" in defense:
        defense_attack["epsilon"] = defense.pop("epsilon")
    defense["attack"] = _build(AttackParams, defense_attack, "defense.attack")
    doc["defense"] = _build(AdvTrainParams, defense, "defense")
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(v: float) -> str:
    return repr(float(v))


def _dataset_path(args, cfg: RunConfig) -> Path:
    return Path(args.dataset) if args.dataset else Path(cfg.out) / "dataset.json"


def cmd_generate(cfg: RunConfig, args) -> list[Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "dataset.json"
    save_dataset(build_dataset(cfg.scenario, cfg.n_samples, cfg.seed), path)
    return [path]


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise DataError(f"{what} not found: {path}")
    return path


def cmd_train(cfg: RunConfig, args) -> list[Path]:
    ds = load_dataset(_require(_dataset_path(args, cfg), "dataset"))
    tr, va, _ = split_dataset(ds, cfg.seed, cfg.test_fraction)
    model, history = train_undefended(tr, va, cfg.train_config())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    _write_csv(out / "history.csv", ["epoch", "train_loss", "val_loss"],
               [[i + 1, _num(a), _num(b)]
                for i, (a, b) in enumerate(zip(history.train_loss, history.val_loss))])
    return [out / "model.json", out / "history.csv"]


def cmd_attack(cfg: RunConfig, args) -> list[Path]:
    ds = load_dataset(_require(_dataset_path(args, cfg), "dataset"))
    model_path = Path(args.model) if args.model else Path(cfg.out) / "model.json"
    model = load_model(_require(model_path, "model"))
    if model.input_dim != ds.inputs.shape[1] or model.output_dim != ds.targets.shape[1]:
        raise DataError(f"model ({model.input_dim}->{model.output_dim}) does not match dataset "
                        f"({ds.inputs.shape[1]}->{ds.targets.shape[1]})")
    if model.r_max is None:
        model.r_max, model.input_scale = ds.r_max, ds.input_scale
    _, va, te = split_dataset(ds, cfg.seed, cfg.test_fraction)
    alpha = cfg.attack.alpha if cfg.attack.alpha is not None else default_alpha(
        model, va.inputs, va.targets)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rows = []
    for eps in cfg.eps_grid:
        params = dataclasses.replace(cfg.attack, epsilon=eps)
        x_adv = complex_fgsm(te.inputs, te.targets, model, params, alpha)
        max_pert = float(np.max(np.abs(x_adv - te.inputs)))
        if max_pert > eps + 1e-12:
            raise NumericError(f"perturbation {max_pert} exceeds budget {eps}")
        rows.append([_num(eps), _num(compute_mse(model, x_adv, te.targets)),
                     _num(predicted_beam_rate(model, x_adv, te.rates)),
                     _num(te.rates.max(axis=1).mean()), _num(max_pert), _num(alpha)])
        if args.dump_eps is not None and np.isclose(eps, args.dump_eps):
            path = out / "adversarial_samples.csv"
            write_adversarial_dump(path, te.inputs, x_adv)
            written.append(path)
    path = out / "attack.csv"
    _write_csv(path, ["epsilon", "mse", "mean_rate", "genie_rate", "max_perturbation", "alpha"],
               rows)
    return [path, *written]


def cmd_defend(cfg: RunConfig, args) -> list[Path]:
    ds = load_dataset(_require(_dataset_path(args, cfg), "dataset"))
    tr, va, _ = split_dataset(ds, cfg.seed, cfg.test_fraction)
    result = train_defended(tr, va, cfg.train_config(), cfg.defense)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / "defended_model.json")
    _write_csv(out / "rounds.csv",
               ["round", "n_train", "val_clean_mse", "val_adv_mse", "alpha", "stop_reason"],
               [[r.round, r.n_train, _num(r.val_clean_mse), _num(r.val_adv_mse), _num(r.alpha),
                 result.stop_reason if i == len(result.rounds) - 1 else ""]
                for i, r in enumerate(result.rounds)])
    return [out / "defended_model.json", out / "rounds.csv"]


def cmd_sweep(cfg: RunConfig, args) -> list[Path]:
    sweep_cfg = cfg.sweep_config()
    results = [run_sweep(s, sweep_cfg, jobs=args.jobs) for s in cfg.resolved]
    merged = merge_results(results)
    written = emit_report(merged, cfg.out, plots=not args.no_plots)
    meta = Path(cfg.out) / "sweep_meta.json"
    meta.write_text(json.dumps(merged.metadata, indent=2, sort_keys=True, default=str) + "\n")
    return [*written, meta]


def cmd_report(cfg: RunConfig, args) -> list[Path]:
    out = Path(cfg.out)
    result = read_sweep_csv(_require(out / "sweep.csv", "sweep.csv"), out / "mse.csv")
    return emit_report(result, out, plots=True)[2:]


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "attack": cmd_attack,
            "defend": cmd_defend, "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advbeam", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--scale", choices=sorted(SCALE_DEFAULTS), default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--out", default=None, help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in {"train", "attack", "defend"}:
            p.add_argument("--dataset", help="dataset file (default: <out>/dataset.json)")
        if name == "attack":
            p.add_argument("--model", help="model file (default: <out>/model.json)")
            p.add_argument("--dump-eps", type=float, default=None,
                           help="write adversarial_samples.csv for this epsilon")
        if name == "sweep":
            p.add_argument("--no-plots", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_run_config(args.config, {"scale": args.scale, "seed": args.seed,
                                            "out": args.out})
        for path in COMMANDS[args.command](cfg, args):
            print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
