"""Three-scenario desk sweep: writes sweep.csv, mse.csv and one SVG per scenario.

    python3 scripts/desk_sweep.py --out runs/desk --jobs 4
"""
import argparse
import sys
from pathlib import Path

from advbeam.cli import main

CONFIG = Path(__file__).parent / "configs" / "desk.json"

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sys.exit(main(["sweep", "--config", str(CONFIG), "--out", args.out,
                   "--jobs", str(args.jobs), "--seed", str(args.seed)]))
