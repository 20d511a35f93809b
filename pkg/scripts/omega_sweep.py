"""Distance omega between x_hat and x_tilde on the 3x2 example over a (mu, nu) grid.

    python scripts/omega_sweep.py --out omega.csv
"""

import argparse

import numpy as np

from stochlsq.analysis import omega_sweep, write_omega_csv
from stochlsq.cli import parse_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mu", default="0.05:2:40", help="start:end:count or a comma list")
    ap.add_argument("--nu", default="0,1,5,10")
    ap.add_argument("--out", default="omega.csv")
    args = ap.parse_args()

    rows = omega_sweep(parse_grid(args.mu), parse_grid(args.nu))
    write_omega_csv(rows, args.out)
    table = np.array(rows)
    for nu in np.unique(table[:, 1]):
        sel = table[table[:, 1] == nu]
        i = int(np.argmax(sel[:, 2]))
        print(f"nu={nu:g}: omega in [{sel[:, 2].min():.4f}, {sel[:, 2].max():.4f}], "
              f"largest at mu={sel[i, 0]:.3f}")
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
