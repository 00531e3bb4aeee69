"""Attacked/clean MSE ratio of the undefended desk model for a few budgets and stop thresholds.

Useful for seeing how the output-distance stop bounds the damage a single attack can do.

    python3 scripts/attack_ratio.py --seeds 2
"""
import argparse

import numpy as np

from advbeam.adversarial import AttackParams, complex_fgsm, default_alpha
from advbeam.channel import build_scenario
from advbeam.experiments import build_dataset, compute_mse, split_dataset, train_undefended
from advbeam.nn import TrainConfig

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="outdoor-o1")
    ap.add_argument("--seeds", type=int, default=2)
    ap.add_argument("--samples", type=int, default=5000)
    args = ap.parse_args()
    scen = build_scenario(args.scenario, scale="desk")
    budgets = (0.01, 0.05, 0.1, 0.5)
    ratios = {"2x RMS": [], "none": []}
    for seed in range(args.seeds):
        tr, va, te = split_dataset(build_dataset(scen, args.samples, seed), seed)
        model, _ = train_undefended(tr, va, TrainConfig(seed=seed))
        clean = compute_mse(model, te.inputs, te.targets)
        for name, alpha in (("2x RMS", default_alpha(model, va.inputs, va.targets)),
                            ("none", np.inf)):
            ratios[name].append([compute_mse(model, complex_fgsm(te.inputs, te.targets, model,
                                                                 AttackParams(e), alpha),
                                             te.targets) / clean for e in budgets])
    print("alpha     " + "".join(f"eps={e:<8}" for e in budgets))
    for name, vals in ratios.items():
        print(f"{name:<10}" + "".join(f"{v:<12.2f}" for v in np.mean(vals, axis=0)))
