"""Extreme learning machine on Gaussian blobs: QR baseline vs SQN training.

Reports test accuracy of both and the relative Frobenius distance of the SQN
output weights from the QR weights, as mean +- std over several seeds.

    python scripts/elm_blobs.py --out elm.csv
"""

import argparse

import numpy as np

from stochlsq.cli import write_csv
from stochlsq.elm import SqnConfig, accuracy, init_hidden, make_blobs, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--classes", type=int, default=2)
    ap.add_argument("--hidden", type=int, default=50)
    ap.add_argument("--ell", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="elm.csv")
    args = ap.parse_args()

    rows = []
    for seed in range(args.seeds):
        train_set = make_blobs(args.m, args.d, args.classes, seed=2 * seed)
        test_set = make_blobs(args.m // 2, args.d, args.classes, seed=2 * seed + 1)
        model = init_hidden(args.hidden, args.d, seed=seed)
        base = train(model, train_set, "qr")
        sqn = train(model, train_set, "sqn", SqnConfig(ell=args.ell, seed=seed))
        werr = np.linalg.norm(sqn.out_weights - base.out_weights) / np.linalg.norm(base.out_weights)
        rows.append((seed, accuracy(base, test_set), accuracy(sqn, test_set), float(werr),
                     sqn.report.iterations))
    write_csv(args.out, ["seed", "acc_qr", "acc_sqn", "rel_weight_err", "sqn_iterations"], rows)
    table = np.array([r[1:] for r in rows])
    mean, std = table.mean(axis=0), table.std(axis=0)
    print(f"test accuracy  qr {mean[0]:.4f} +- {std[0]:.4f}   sqn {mean[1]:.4f} +- {std[1]:.4f}")
    print(f"relative weight error {mean[2]:.4f} +- {std[2]:.4f}, "
          f"SQN iterations {mean[3]:.0f} +- {std[3]:.0f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
