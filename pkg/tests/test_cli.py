import csv
import json

import numpy as np
import pytest

from advbeam.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, load_run_config, main


def write_config(tmp_path, **extra):
    doc = {"scenario": "outdoor-o1", "n_samples": 200, "repetitions": 2,
           "eps_grid": [0.0, 0.05, 0.1], "train": {"epochs": 2},
           "defense": {"max_rounds": 2}}
    doc.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run(cmd, cfg, out, *extra):
    return main([cmd, "--config", cfg, "--out", str(out), "--scale", "desk", *extra])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_defaults_mirror_training_table():
    cfg = load_run_config(None, {})
    assert (cfg.train.learning_rate, cfg.train.batch_size, cfg.train.dropout,
            cfg.train.epochs) == (0.01, 100, 0.25, 10)
    assert cfg.n_samples == 5000 and cfg.repetitions == 5 and len(cfg.resolved) == 3
    assert cfg.defense.attack.epsilon == 0.1 and cfg.defense.max_rounds == 10
    paper = load_run_config(None, {"scale": "paper"})
    assert paper.n_samples == 35000 and paper.repetitions == 20


def test_pipeline(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out" / "nested"
    assert run("generate", cfg, out) == 0
    doc = json.loads((out / "dataset.json").read_text())
    assert doc["n_samples"] == 200 and doc["scenario"] == "outdoor-o1" and doc["r_max"] > 0

    assert run("train", cfg, out) == 0
    hist = read_rows(out / "history.csv")
    assert len(hist) == 2 and all(np.isfinite(float(r["train_loss"])) for r in hist)

    assert run("attack", cfg, out, "--dump-eps", "0.05") == 0
    rows = read_rows(out / "attack.csv")
    assert [float(r["epsilon"]) for r in rows] == [0.0, 0.05, 0.1]
    assert float(rows[0]["max_perturbation"]) == 0.0
    dump = read_rows(out / "adversarial_samples.csv")
    assert all(abs(float(r["adv_re_or_im"]) - float(r["clean_re_or_im"])) <= 0.05 + 1e-12
               for r in dump)

    assert run("defend", cfg, out) == 0
    rounds = read_rows(out / "rounds.csv")
    assert len(rounds) == 2 and rounds[-1]["stop_reason"] in {"max_rounds", "steady_state"}


def test_attack_eps_zero_matches_clean(tmp_path):
    from advbeam.experiments import compute_mse, load_dataset, split_dataset
    from advbeam.nn import load_model
    cfg = write_config(tmp_path)
    for cmd in ("generate", "train", "attack"):
        assert run(cmd, cfg, tmp_path) == 0
    ds = load_dataset(tmp_path / "dataset.json")
    _, _, te = split_dataset(ds, 0)
    model = load_model(tmp_path / "model.json")
    row = read_rows(tmp_path / "attack.csv")[0]
    assert float(row["mse"]) == compute_mse(model, te.inputs, te.targets)


def test_epochs_zero_and_one_round(tmp_path):
    cfg = write_config(tmp_path, train={"epochs": 0}, defense={"max_rounds": 1})
    assert run("generate", cfg, tmp_path) == 0
    assert run("train", cfg, tmp_path) == 0
    assert read_rows(tmp_path / "history.csv") == []
    assert (tmp_path / "model.json").exists()
    assert run("defend", cfg, tmp_path) == 0
    rounds = read_rows(tmp_path / "rounds.csv")
    assert len(rounds) == 1 and rounds[0]["stop_reason"] == "max_rounds"


def test_generate_idempotent(tmp_path):
    cfg = write_config(tmp_path)
    assert run("generate", cfg, tmp_path / "a") == 0
    assert run("generate", cfg, tmp_path / "b") == 0
    assert (tmp_path / "a" / "dataset.json").read_bytes() == \
        (tmp_path / "b" / "dataset.json").read_bytes()


def test_sweep_and_report(tmp_path):
    cfg = write_config(tmp_path)
    assert run("sweep", cfg, tmp_path) == 0
    rows = read_rows(tmp_path / "sweep.csv")
    assert len(rows) == 9
    svg = tmp_path / "rate_vs_eps_outdoor-o1.svg"
    before = svg.read_bytes()
    svg.unlink()
    assert run("report", cfg, tmp_path) == 0
    assert svg.read_bytes() == before


@pytest.mark.parametrize("doc", [{"bogus": 1}, {"scenario": "atlantis"}, {"eps_grid": []},
                                 {"eps_grid": [0.2, 0.1]}, {"eps_grid": [-0.1]},
                                 {"train": {"dropout": 2.0}}, {"attack": {"max_iters": 0}},
                                 {"scale": "huge"}])
def test_config_errors(tmp_path, doc, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["generate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    (tmp_path / "c.json").write_text("{nope")
    assert main(["generate", "--config", str(tmp_path / "c.json")]) == EXIT_CONFIG
    assert main(["generate", "--jobs", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_data_errors(tmp_path):
    cfg = write_config(tmp_path)
    assert run("train", cfg, tmp_path / "empty") == EXIT_DATA
    (tmp_path / "dataset.json").write_text("{}")
    assert run("train", cfg, tmp_path) == EXIT_DATA


def test_dimension_mismatch(tmp_path):
    cfg = write_config(tmp_path)
    assert run("generate", cfg, tmp_path) == 0
    assert run("train", cfg, tmp_path) == 0
    other = write_config(tmp_path, scenario={"preset": "outdoor-o1", "num_bs": 2})
    assert run("generate", other, tmp_path / "o") == 0
    assert main(["attack", "--config", cfg, "--out", str(tmp_path), "--dataset",
                 str(tmp_path / "o" / "dataset.json")]) == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure(tmp_path):
    cfg = write_config(tmp_path, train={"epochs": 1, "learning_rate": 1e300})
    assert run("generate", cfg, tmp_path) == 0
    assert run("train", cfg, tmp_path) == EXIT_NUMERIC
