"""Command-line entry point.

Subcommands and the CSV files they write:

``solve --config F``
    One solver run. Trace columns: ``k, alpha, sample_f, full_f, err_<ref>...,
    rows_touched_cum, qn_rejected``. ``full_f`` is empty between checkpoints
    (every ``run.trace_every`` iterations and the last one). References are
    ``xhat`` (QR solution, ``refs.xhat``), ``xtilde`` (``refs.xtilde_mode``)
    and ``xtrue`` for generated problems.
``sketch-verify --spec F --n N``
    ``family, m, ell, beta, n_samples, deviation`` where deviation is
    ``max |mean(W W^T) / beta - I|`` over N draws.
``omega --mu GRID --nu GRID``
    ``mu, nu, omega`` for the 3x2 example. GRID is ``start:end:count``
    (inclusive), a comma list, or one number.
``unbiased --mu X --nu Y --sigma S --trials T``
    ``estimator, component, x_true, mean, se, var`` from the noise Monte Carlo.
``compare-sketches --config F``
    ``distribution, k, rows_touched_cum, full_f, err_xhat`` for all four
    sketch families at every trace checkpoint.
``elm train`` / ``elm eval``
    ``method, n_train, n_hidden, iterations, stop_reason, train_accuracy`` and
    ``n, accuracy``.

Relative paths inside a config file are resolved against the file's
directory; output paths against the working directory. ``--seed`` overrides
``problem.seed``. Exit status is 0 on success, 2 on invalid input and 1 on
numerical failure (or a failed ``--max-deviation`` check).
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import analysis
from . import elm
from .config import (
    SKETCH_FAMILIES,
    build_problem,
    build_rule,
    build_schedule,
    build_sketch,
    build_strategy,
    parse_config,
)
from .errors import ConfigError, DimensionError, NotTrainedError, ParseError
from .matrix_io import format_float
from .problem import make_rng, qr_solve
from .sketch import beta_of, empirical_moment_deviation, enumerate_outcomes
from .solver import run

EXIT_OK, EXIT_NUMERICAL, EXIT_INVALID = 0, 1, 2


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def _ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)


def write_csv(path, header, rows):
    _ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def parse_grid(text):
    """``start:end:count`` (inclusive), ``a,b,c`` or a single number."""
    try:
        if ":" in text:
            start, end, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            return np.linspace(float(start), float(end), count)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValueError(f"bad grid {text!r}; expected start:end:count, a comma list or a number") from None


def _load_config(args):
    cfg = parse_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _references(cfg, problem):
    refs = {}
    if cfg.refs.xhat:
        refs["xhat"] = qr_solve(problem.a, problem.rhs)
    mode = cfg.refs.xtilde_mode
    if mode != "none":
        spec = build_sketch(cfg, problem.m, problem.n)
        if mode == "kaczmarz" and enumerate_outcomes(spec) is None:
            raise ConfigError("needs a finite sketch family (block_kaczmarz or small kaczmarz)",
                              key="refs.xtilde_mode")
        est = analysis.estimate_P(spec, problem.a, seed=cfg.problem.seed,
                                  svd_tol=cfg.strategy.svd_tol,
                                  exhaustive=True if mode == "kaczmarz" else False)
        refs["xtilde"] = analysis.x_tilde_from_P(problem.a, problem.rhs, est.p_hat)
    if problem.x_true is not None:
        refs["xtrue"] = problem.x_true
    return refs


def _solve_with(cfg, problem, spec, refs):
    return run(problem, spec, build_schedule(cfg), build_strategy(cfg), build_rule(cfg),
               refs=refs, seed=cfg.problem.seed, x0=cfg.run.x0,
               trace_every=cfg.run.trace_every)


def cmd_solve(args):
    cfg = _load_config(args)
    problem = build_problem(cfg)
    spec = build_sketch(cfg, problem.m, problem.n)
    report = _solve_with(cfg, problem, spec, _references(cfg, problem))
    out = args.out or cfg.run.out
    trace = report.trace
    _ensure_parent(out)
    trace.to_csv(out)
    print(f"iterations={report.iterations} stop_reason={report.stop_reason} "
          f"full_f={format_float(trace.full_f[-1])} trace={out}")
    return EXIT_OK


def cmd_sketch_verify(args):
    cfg = _load_config(args)
    if cfg.problem.m is None:
        raise ConfigError("sketch-verify needs the row count", key="problem.m")
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    spec = build_sketch(cfg, cfg.problem.m, cfg.problem.n)
    dev = empirical_moment_deviation(spec, args.n, make_rng(cfg.problem.seed),
                                     stratified=args.stratified)
    print(f"family={cfg.sketch.family} beta={format_float(beta_of(spec))} "
          f"n={args.n} deviation={format_float(dev)}")
    if args.out:
        ell = getattr(spec, "ell", None) or max(e - s for s, e in spec.blocks)
        write_csv(args.out, ["family", "m", "ell", "beta", "n_samples", "deviation"],
                  [(cfg.sketch.family, spec.m, ell, beta_of(spec), args.n, dev)])
    if args.max_deviation is not None and not dev < args.max_deviation:
        print(f"deviation {format_float(dev)} >= {format_float(args.max_deviation)}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_omega(args):
    rows = analysis.omega_sweep(parse_grid(args.mu), parse_grid(args.nu))
    analysis.write_omega_csv(rows, args.out)
    print(f"{len(rows)} rows written to {args.out}")
    return EXIT_OK


def cmd_unbiased(args):
    seed = 0 if args.seed is None else args.seed
    summary = analysis.unbiasedness_study(analysis.ExampleParams(args.mu, args.nu),
                                          args.sigma, args.trials, seed)
    write_csv(args.out, ["estimator", "component", "x_true", "mean", "se", "var"],
              summary.csv_rows())
    print(f"{args.trials} trials written to {args.out}")
    return EXIT_OK


def cmd_compare_sketches(args):
    cfg = _load_config(args)
    problem = build_problem(cfg)
    xhat = qr_solve(problem.a, problem.rhs)
    res = problem.a @ xhat - problem.rhs
    print(f"least-squares optimum full_f={format_float(0.5 * float(np.sum(res * res)))}")
    rows = []
    for family in SKETCH_FAMILIES:
        spec = build_sketch(cfg, problem.m, problem.n, family=family)
        trace = _solve_with(cfg, problem, spec, {"xhat": xhat}).trace
        for rec in trace:
            if rec.full_f is not None:
                rows.append((family, rec.k, rec.rows_touched_cum, rec.full_f,
                             rec.err_to_ref["xhat"]))
        print(f"{family}: iterations={len(trace)} rows_touched={trace.rows_touched_cum[-1]} "
              f"full_f={format_float(trace.full_f[-1])}")
    write_csv(args.out, ["distribution", "k", "rows_touched_cum", "full_f", "err_xhat"], rows)
    return EXIT_OK


def _elm_dataset(args, prefix):
    images = getattr(args, f"{prefix}_images")
    labels = getattr(args, f"{prefix}_labels")
    if images or labels:
        if not (images and labels):
            raise ValueError(f"--{prefix}-images and --{prefix}-labels go together")
        if args.blobs is not None:
            raise ValueError("give either IDX files or --blobs, not both")
        return elm.read_idx(images, labels, args.classes)
    if args.blobs is None:
        raise ValueError(f"need --{prefix}-images/--{prefix}-labels or --blobs M")
    return elm.make_blobs(args.blobs, args.blob_dim, args.classes, args.blob_seed)


def cmd_elm_train(args):
    seed = 0 if args.seed is None else args.seed
    data = _elm_dataset(args, "train")
    if args.rotations:
        data = elm.augment_dataset(data, args.rotations, seed=seed + 2)
    model = elm.init_hidden(args.hidden, data.d, seed=seed)
    config = elm.SqnConfig(ell=args.ell, p=args.p, lambda1=args.lambda1,
                           max_iters=args.max_iters, tol=args.tol, seed=seed + 1)
    model = elm.train(model, data, args.method, config)
    elm.save_model(model, args.model)
    acc = elm.accuracy(model, data)
    iters, reason = ((model.report.iterations, model.report.stop_reason)
                     if model.report is not None else (0, "direct"))
    print(f"method={args.method} n_train={len(data)} iterations={iters} "
          f"stop_reason={reason} train_accuracy={format_float(acc)} model={args.model}")
    if args.out:
        write_csv(args.out, ["method", "n_train", "n_hidden", "iterations", "stop_reason",
                             "train_accuracy"],
                  [(args.method, len(data), args.hidden, iters, reason, acc)])
    return EXIT_OK


def cmd_elm_eval(args):
    model = elm.load_model(args.model)
    data = _elm_dataset(args, "test")
    acc = elm.accuracy(model, data)
    print(f"n={len(data)} accuracy={format_float(acc)}")
    if args.out:
        write_csv(args.out, ["n", "accuracy"], [(len(data), acc)])
    return EXIT_OK


def _optional_float(text):
    return None if text.lower() == "none" else float(text)


def build_parser():
    seed_parent = argparse.ArgumentParser(add_help=False)
    seed_parent.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                             help="override problem.seed / the run seed")

    parser = argparse.ArgumentParser(prog="stochlsq",
                                     description="Stochastic solvers for least squares.")
    parser.add_argument("--seed", type=int, default=None,
                        help="override problem.seed / the run seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[seed_parent], help="run the solver on a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="trace CSV path (default: run.out)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sketch-verify", parents=[seed_parent],
                       help="check E(W W^T) = beta I empirically")
    p.add_argument("--spec", dest="config", required=True, help="config with sketch.* keys")
    p.add_argument("--n", type=int, default=100_000, help="number of draws")
    p.add_argument("--stratified", action="store_true",
                   help="cycle through outcomes of finite families")
    p.add_argument("--max-deviation", type=float, help="exit 1 unless deviation is below this")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sketch_verify)

    p = sub.add_parser("omega", parents=[seed_parent], help="omega(mu, nu) over a grid")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--out", default="omega.csv")
    p.set_defaults(func=cmd_omega)

    p = sub.add_parser("unbiased", parents=[seed_parent],
                       help="noise Monte Carlo for both estimators")
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--out", default="unbiased.csv")
    p.set_defaults(func=cmd_unbiased)

    p = sub.add_parser("compare-sketches", parents=[seed_parent],
                       help="objective against row accesses for every sketch family")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="compare_sketches.csv")
    p.set_defaults(func=cmd_compare_sketches)

    p = sub.add_parser("elm", help="extreme learning machine")
    elm_sub = p.add_subparsers(dest="elm_command", required=True)
    data_parent = argparse.ArgumentParser(add_help=False)
    data_parent.add_argument("--blobs", type=int, help="use M synthetic Gaussian-blob samples")
    data_parent.add_argument("--blob-dim", type=int, default=10)
    data_parent.add_argument("--blob-seed", type=int, default=0)
    data_parent.add_argument("--classes", type=int, default=None,
                             help="class count (blobs default 2, IDX default 10)")
    data_parent.add_argument("--out", help="metrics CSV")

    t = elm_sub.add_parser("train", parents=[seed_parent, data_parent])
    t.add_argument("--train-images")
    t.add_argument("--train-labels")
    t.add_argument("--model", required=True, help="output model file")
    t.add_argument("--method", choices=("sqn", "qr"), default="sqn")
    t.add_argument("--hidden", type=int, default=300)
    t.add_argument("--rotations", type=int, default=0)
    t.add_argument("--ell", type=int, default=50)
    t.add_argument("--p", type=int, default=None)
    t.add_argument("--lambda1", type=float, default=1e-5)
    t.add_argument("--max-iters", type=int, default=1000)
    t.add_argument("--tol", type=_optional_float, default=1e-4)
    t.set_defaults(func=cmd_elm_train)

    e = elm_sub.add_parser("eval", parents=[seed_parent, data_parent])
    e.add_argument("--test-images")
    e.add_argument("--test-labels")
    e.add_argument("--model", required=True)
    e.set_defaults(func=cmd_elm_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "classes", "unset") is None:
        args.classes = 2 if args.blobs is not None else 10
    try:
        return args.func(args)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ParseError, DimensionError, NotTrainedError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
