"""Stochastic approximation loop: x_k = x_{k-1} + alpha_k s_k with a fresh sketch per step."""

import csv
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from .directions import Gradient, Newton, QuasiNewton, gradient_dir, newton_dir, qn_dir, qn_init, qn_update
from .errors import DimensionError
from .matrix_io import format_float
from .problem import as_matrix, make_rng
from .sketch import beta_of, draw, sketch_apply

STOP_REASONS = ("max_iters", "x_change", "f_change", "both")


@dataclass(frozen=True)
class Harmonic:
    """alpha_k = c / k."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("step constant c must be positive")


@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("step constant c must be positive")


StepSchedule = Union[Harmonic, Constant]


def step_size(schedule, k):
    if k < 1:
        raise ValueError("iteration index starts at 1")
    if isinstance(schedule, Harmonic):
        return schedule.c / k
    return schedule.c


def satisfies_step_conditions(schedule):
    """sum alpha_k = inf and sum alpha_k^2 < inf, decided analytically."""
    if isinstance(schedule, Harmonic):
        return True
    warnings.warn("a constant step size has sum(alpha_k^2) = inf; "
                  "convergence guarantees do not apply", stacklevel=2)
    return False


@dataclass(frozen=True)
class StoppingRule:
    """Stop at ``max_iters`` or when the change tests fire.

    ``window`` is the number of sample objectives in the moving average
    (s + 1 with s = 9 by default). ``tol=None`` disables both change tests.
    ``mode='both'`` needs both tests on the same iteration, ``'any'`` either one.
    """

    max_iters: int = 1000
    tol: Optional[float] = 1e-4
    window: int = 10
    mode: str = "both"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive (or None to disable)")
        if self.mode not in ("any", "both"):
            raise ValueError(f"mode must be 'any' or 'both', got {self.mode!r}")


def check_stop(rule, x_history, f_history, k=None):
    """Evaluate the stopping tests after iteration ``k``.

    ``x_history`` ends with ``x_{k-1}, x_k``; ``f_history`` ends with the
    sample objective of iteration ``k``. Returns a reason or None.
    """
    k = len(f_history) if k is None else k
    x_fired = f_fired = False
    if rule.tol is not None:
        if len(x_history) >= 2:
            x_prev, x_cur = x_history[-2], x_history[-1]
            change = np.max(np.abs(x_prev - x_cur)) if np.size(x_cur) else 0.0
            scale = 1.0 + (np.max(np.abs(x_cur)) if np.size(x_cur) else 0.0)
            x_fired = change < math.sqrt(rule.tol) * scale
        w = rule.window
        if len(f_history) >= w + 1:
            f = list(f_history)[-(w + 1):]
            f_prev = sum(f[:-1]) / w
            f_cur = sum(f[1:]) / w
            f_fired = abs(f_prev - f_cur) < rule.tol * (1.0 + f_prev)
    if x_fired and f_fired:
        return "both"
    if rule.mode == "any" and (x_fired or f_fired):
        return "x_change" if x_fired else "f_change"
    if k >= rule.max_iters:
        return "max_iters"
    return None


@dataclass(frozen=True)
class TraceRecord:
    k: int
    alpha: float
    sample_f: float
    full_f: Optional[float]
    err_to_ref: Dict[str, float]
    rows_touched_cum: int
    qn_rejected: bool


@dataclass
class Trace:
    """Per-iteration telemetry, stored column-wise."""

    ref_names: List[str]
    k: List[int] = field(default_factory=list)
    alpha: List[float] = field(default_factory=list)
    sample_f: List[float] = field(default_factory=list)
    full_f: List[Optional[float]] = field(default_factory=list)
    errors: Dict[str, List[float]] = field(default_factory=dict)
    rows_touched_cum: List[int] = field(default_factory=list)
    qn_rejected: List[bool] = field(default_factory=list)

    def __post_init__(self):
        for name in self.ref_names:
            self.errors.setdefault(name, [])

    def __len__(self):
        return len(self.k)

    def __getitem__(self, i):
        return TraceRecord(
            self.k[i], self.alpha[i], self.sample_f[i], self.full_f[i],
            {name: self.errors[name][i] for name in self.ref_names},
            self.rows_touched_cum[i], self.qn_rejected[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def error(self, name):
        return np.asarray(self.errors[name])

    def header(self):
        return (["k", "alpha", "sample_f", "full_f"]
                + [f"err_{name}" for name in self.ref_names]
                + ["rows_touched_cum", "qn_rejected"])

    def rows(self):
        for i in range(len(self)):
            ff = self.full_f[i]
            yield ([str(self.k[i]), format_float(self.alpha[i]), format_float(self.sample_f[i]),
                    "" if ff is None else format_float(ff)]
                   + [format_float(self.errors[name][i]) for name in self.ref_names]
                   + [str(self.rows_touched_cum[i]), str(int(self.qn_rejected[i]))])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.rows())


@dataclass(frozen=True, eq=False)
class SolveReport:
    final_x: np.ndarray
    iterations: int
    stop_reason: str
    trace: Trace
    full_f0: float
    qn_reject_count: int = 0
    qn_inner_fallbacks: int = 0


def _full_objective(a, b, x):
    res = a @ x - b
    return 0.5 * float(np.sum(res * res))


def _initial_x(x0, n, r, rng):
    if x0 is None or (isinstance(x0, str) and x0 == "zero"):
        return np.zeros((n, r))
    if isinstance(x0, str) and x0 == "random":
        return rng.standard_normal((n, r))
    x0 = as_matrix(x0, "x0")
    if x0.shape != (n, r):
        raise DimensionError(f"x0 must be {(n, r)}, got {x0.shape}")
    return x0.copy()


def run(problem, spec, schedule, strategy, rule, refs=None, seed=0, x0="zero", trace_every=10):
    """Run the stochastic approximation method on ``problem``.

    All right-hand-side columns share one sketch stream and, for the
    quasi-Newton strategy, one inverse-Hessian chain. ``refs`` maps a name to a
    reference solution; the trace records ``||x_k - ref||_F / ||ref||_F``.
    ``x0`` is ``'zero'``, ``'random'`` (standard normal) or an array.
    """
    a, b = problem.a, problem.rhs
    m, n = a.shape
    r = b.shape[1]
    if spec.m != m:
        raise DimensionError(f"sketch has m={spec.m}, problem has m={m}")
    if trace_every < 1:
        raise ValueError("trace_every must be >= 1")
    sketch_seq, x0_seq = np.random.SeedSequence(int(seed)).spawn(2)
    rng = make_rng(sketch_seq)
    x = _initial_x(x0, n, r, make_rng(x0_seq))

    ref_arrays = {}
    for name, ref in (refs or {}).items():
        ref = as_matrix(ref, f"reference {name}")
        if ref.shape != (n, r):
            raise DimensionError(f"reference {name} must be {(n, r)}, got {ref.shape}")
        ref_arrays[name] = (ref, float(np.linalg.norm(ref)) or 1.0)

    beta = beta_of(spec)
    trace = Trace(list(ref_arrays))
    state = qn_init(n, strategy) if isinstance(strategy, QuasiNewton) else None
    x_hist = deque([x], maxlen=2)
    f_hist = deque(maxlen=rule.window + 1)
    rows_cum = 0
    full_f0 = _full_objective(a, b, x)
    reason = None
    k = 0
    while reason is None:
        k += 1
        sample = draw(spec, rng)
        wa, wb, touched = sketch_apply(sample, a, b)
        rows_cum += touched
        rejected = False
        if state is not None:
            if strategy.strict_adapted:
                d = qn_dir(state, wa, wb, x)
                state = qn_update(state, wa)
            else:
                state = qn_update(state, wa)
                d = qn_dir(state, wa, wb, x)
            rejected = state.last_rejected
        elif isinstance(strategy, Newton):
            d = newton_dir(wa, wb, x, strategy.svd_tol)
        elif isinstance(strategy, Gradient):
            d = gradient_dir(wa, wb, x)
        else:
            raise TypeError(f"unknown strategy {strategy!r}")
        alpha = step_size(schedule, k)
        x = x + alpha * d

        sres = (wa @ x - wb).ravel()
        sample_f = 0.5 / beta * float(sres @ sres)
        x_hist.append(x)
        f_hist.append(sample_f)
        reason = check_stop(rule, x_hist, f_hist, k)

        trace.k.append(k)
        trace.alpha.append(alpha)
        trace.sample_f.append(sample_f)
        trace.full_f.append(_full_objective(a, b, x)
                            if (k % trace_every == 0 or reason is not None) else None)
        for name, (ref, norm) in ref_arrays.items():
            diff = (x - ref).ravel()
            trace.errors[name].append(math.sqrt(float(diff @ diff)) / norm)
        trace.rows_touched_cum.append(rows_cum)
        trace.qn_rejected.append(rejected)

    return SolveReport(
        final_x=x,
        iterations=k,
        stop_reason=reason,
        trace=trace,
        full_f0=full_f0,
        qn_reject_count=state.reject_count if state is not None else 0,
        qn_inner_fallbacks=state.inner_fallbacks if state is not None else 0,
    )


def run_multi_rhs(problem, spec, schedule, strategy, rule, refs=None, seed=0, x0="zero",
                  trace_every=10):
    """Solve all right-hand sides at once; returns ``(X, report)``.

    Stopping tests see the whole n x r iterate and the summed sample objective.
    """
    report = run(problem, spec, schedule, strategy, rule, refs, seed, x0, trace_every)
    return report.final_x, report
