"""Print a rate-vs-epsilon table (undefended / defended per scenario) from a sweep.csv.

    python3 scripts/rate_table.py runs/desk/sweep.csv
"""
import argparse
import csv
from collections import defaultdict


def load(path):
    table = defaultdict(dict)
    with open(path) as fh:
        for row in csv.DictReader(fh):
            table[(row["scenario"], row["case"])][float(row["epsilon"])] = float(row["mean_rate"])
    return table


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("sweep_csv")
    args = ap.parse_args()
    table = load(args.sweep_csv)
    scenarios = sorted({s for s, _ in table})
    eps = sorted(next(iter(table.values())))
    header = ["eps"] + [f"{s}:{tag}" for s in scenarios for tag in ("undef", "def")]
    print("  ".join(f"{h:>24}" for h in header))
    for e in eps:
        cells = [f"{e:>24.2f}"]
        for s in scenarios:
            for case in ("undefended_attacked", "defended_attacked"):
                v = table.get((s, case), {}).get(e)
                cells.append(f"{v:>24.5f}" if v is not None else f"{'-':>24}")
        print("  ".join(cells))
