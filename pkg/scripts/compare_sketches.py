"""Compare the four sketch families by rows of A read versus error.

Runs ``stochlsq compare-sketches`` on configs/compare.cfg and reports, per
family, how many row accesses it took to reach each error level.

    python scripts/compare_sketches.py --out compare.csv
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

from stochlsq.cli import main as cli_main

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE / "configs" / "compare.cfg"))
    ap.add_argument("--out", default="compare.csv")
    ap.add_argument("--levels", default="0.05,0.02,0.01")
    args = ap.parse_args()

    status = cli_main(["compare-sketches", "--config", args.config, "--out", args.out])
    if status:
        raise SystemExit(status)
    traces = defaultdict(list)
    with open(args.out, newline="") as fh:
        for row in csv.DictReader(fh):
            traces[row["distribution"]].append((int(row["rows_touched_cum"]),
                                                float(row["err_xhat"])))
    levels = [float(v) for v in args.levels.split(",")]
    print("rows read to reach relative error " + ", ".join(f"{v:g}" for v in levels))
    for family, pts in traces.items():
        cells = []
        for level in levels:
            rows = next((r for r, e in pts if e < level), None)
            cells.append("-" if rows is None else str(rows))
        print(f"  {family:18s} " + "  ".join(f"{c:>8s}" for c in cells))


if __name__ == "__main__":
    main()
