"""Stochastic quasi-Newton vs stochastic Newton on Gaussian regression.

Block Kaczmarz sketches (blocks of 100 rows), harmonic steps, random x0.
SQN is measured against the least-squares solution x_hat, SN against both
x_hat and its own limit x_tilde. Writes median errors per iteration.

    python scripts/exp1_sqn_vs_sn.py --out exp1.csv --seeds 5 --iters 500
"""

import argparse

import numpy as np

from stochlsq.analysis import estimate_P, x_tilde_from_P
from stochlsq.cli import write_csv
from stochlsq.directions import Newton, QuasiNewton
from stochlsq.problem import generate_regression, qr_solve
from stochlsq.sketch import block_kaczmarz
from stochlsq.solver import Harmonic, StoppingRule, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--block", type=int, default=100)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--iters", type=int, default=500)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="exp1.csv")
    args = ap.parse_args()

    rule = StoppingRule(args.iters, None)
    sqn, sn_tilde, sn_hat = [], [], []
    for seed in range(args.seeds):
        prob = generate_regression(args.m, args.n, args.sigma, seed)
        spec = block_kaczmarz(args.m, args.block)
        xhat = qr_solve(prob.a, prob.rhs)
        xtilde = x_tilde_from_P(prob.a, prob.rhs, estimate_P(spec, prob.a).p_hat)
        r1 = run(prob, spec, Harmonic(1.0), QuasiNewton(1e-5), rule, refs={"xhat": xhat},
                 seed=seed, x0="random", trace_every=args.iters)
        r2 = run(prob, spec, Harmonic(1.0), Newton(), rule,
                 refs={"xtilde": xtilde, "xhat": xhat}, seed=seed, x0="random",
                 trace_every=args.iters)
        sqn.append(r1.trace.error("xhat"))
        sn_tilde.append(r2.trace.error("xtilde"))
        sn_hat.append(r2.trace.error("xhat"))
        print(f"seed {seed}: |xhat - xtilde|/|xhat| = "
              f"{np.linalg.norm(xhat - xtilde) / np.linalg.norm(xhat):.4f}")

    med = [np.median(np.array(e), axis=0) for e in (sqn, sn_tilde, sn_hat)]
    k = np.arange(1, args.iters + 1)
    write_csv(args.out, ["k", "sqn_err_xhat", "sn_err_xtilde", "sn_err_xhat"],
              zip(k, *med))
    hit = np.flatnonzero(med[0] < 1e-2)
    first = int(k[hit[0]]) if hit.size else None
    print(f"SQN median error < 1e-2 first at k={first}")
    for kk in (20, 200, args.iters):
        if kk <= args.iters:
            print(f"k={kk}: SQN {med[0][kk - 1]:.4f}  SN->xtilde {med[1][kk - 1]:.4f}  "
                  f"SN->xhat {med[2][kk - 1]:.4f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
