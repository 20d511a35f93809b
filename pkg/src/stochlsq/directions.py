"""Search directions built from one sketch: ``wa = W^T A`` and ``wb = W^T b``.

All directions use the unscaled sample gradient ``(W^T A)^T (W^T A x - W^T b)``.
The quasi-Newton matrix is a running inverse of the accumulated sketched
Hessians, so it absorbs the sketch constant beta the same way the Newton
pseudoinverse does.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.sparse.linalg import eigsh

from .errors import DimensionError
from .problem import pseudo_solve

EXACT_EIG_MAX_N = 64


@dataclass(frozen=True)
class Gradient:
    pass


@dataclass(frozen=True)
class Newton:
    svd_tol: float = 0.0

    def __post_init__(self):
        if self.svd_tol < 0:
            raise ValueError("svd_tol must be nonnegative")


@dataclass(frozen=True)
class QuasiNewton:
    """Capped inverse-Hessian chain.

    ``cap`` bounds lambda_max of the applied matrix; the default ``inf`` turns
    the safeguard off. ``strict_adapted`` applies B_{k-1} at step k so the
    matrix is independent of the current sketch.
    """

    lambda1: float = 1e-5
    lambda2: float = 0.0
    cap: float = math.inf
    strict_adapted: bool = False

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be positive")
        if not self.lambda2 >= 0:
            raise ValueError("lambda2 must be nonnegative")
        if not self.cap > self.lambda2:
            raise ValueError("cap must exceed lambda2")


DirectionStrategy = Union[Gradient, Newton, QuasiNewton]


@dataclass(frozen=True, eq=False)
class QnState:
    """Woodbury-maintained chain.

    For ``k >= 1``, ``inv_core = k * (lambda1 I + sum_i A^T W_i W_i^T A)^{-1}``;
    at ``k = 0`` it holds ``I / lambda1``. ``accepted`` is the matrix actually
    applied (the last candidate that passed the cap).
    """

    k: int
    inv_core: np.ndarray
    accepted: np.ndarray
    reject_count: int
    strategy: QuasiNewton
    last_rejected: bool = False
    inner_fallbacks: int = 0
    eigvec: Optional[np.ndarray] = None

    @property
    def candidate(self):
        return self.strategy.lambda2 * np.eye(self.inv_core.shape[0]) + self.inv_core


def _residual(wa, wb, x):
    if wa.shape[1] != x.shape[0] or wa.shape[0] != wb.shape[0] or wb.shape[1] != x.shape[1]:
        raise DimensionError(
            f"incompatible shapes: wa {wa.shape}, wb {wb.shape}, x {x.shape}")
    return wa @ x - wb


def gradient_dir(wa, wb, x):
    """-(W^T A)^T (W^T A x - W^T b)."""
    return -(wa.T @ _residual(wa, wb, x))


def newton_dir(wa, wb, x, svd_tol=0.0):
    """-(W^T A)^+ (W^T A x - W^T b)."""
    return -(pseudo_solve(wa, svd_tol) @ _residual(wa, wb, x))


def newton_dir_unreduced(wa, wb, x, svd_tol=0.0):
    """-(A^T W W^T A)^+ (W^T A)^T (W^T A x - W^T b), i.e. without the reduction."""
    return -(pseudo_solve(wa.T @ wa, svd_tol) @ (wa.T @ _residual(wa, wb, x)))


def lambda_max(mat, tol=1e-6, max_iters=500, start=None, return_vector=False):
    """Largest eigenvalue of a symmetric matrix.

    Dense eigensolve for n <= 64; otherwise Lanczos (ARPACK) started from
    ``start`` (default: normalized all-ones) with relative tolerance ``tol``.
    ``max_iters`` bounds the Lanczos restarts.
    """
    value, vec = _lambda_max(mat, tol, max_iters, start)
    return (value, vec) if return_vector else value


def _lambda_max(mat, tol, max_iters, start):
    mat = np.asarray(mat, dtype=np.float64)
    n = mat.shape[0]
    if mat.shape != (n, n):
        raise DimensionError(f"expected a square matrix, got {mat.shape}")
    scale = max(np.max(np.abs(mat)), 1.0) if n else 1.0
    if n and np.max(np.abs(mat - mat.T)) > 1e-8 * scale:
        raise ValueError("lambda_max needs a symmetric matrix")
    if n == 0:
        return 0.0, np.zeros(0)
    if n <= EXACT_EIG_MAX_N:
        w, v = np.linalg.eigh(mat)
        return float(w[-1]), v[:, -1]
    v0 = np.ones(n) if start is None else np.asarray(start, dtype=np.float64)
    w, v = eigsh(mat, k=1, which="LA", v0=v0 / np.linalg.norm(v0), tol=tol, maxiter=max_iters)
    return float(w[0]), v[:, 0]


def qn_init(n, strategy):
    """State before any sketch: prior (1/lambda1) I, applied B_0 = min(1/lambda1 + lambda2, cap) I."""
    eye = np.eye(n)
    b0 = min(1.0 / strategy.lambda1 + strategy.lambda2, strategy.cap)
    return QnState(0, eye / strategy.lambda1, b0 * eye, 0, strategy)


def _inner_solve(s, rhs):
    try:
        out = np.linalg.solve(s, rhs)
        if np.all(np.isfinite(out)):
            return out, False
    except np.linalg.LinAlgError:
        pass
    return pseudo_solve(s) @ rhs, True


def qn_update(state, wa):
    """Absorb one sketch ``wa`` (ell x n) via a rank-ell Woodbury step.

    k = 1:  B_1 = (1/l1) (I - U (l1 I + U^T U)^{-1} U^T)
    k > 1:  B_k = k/(k-1) B (I - U ((k-1) I + U^T B U)^{-1} U^T B)
    with U = (W^T A)^T. The chain always advances; the cap only decides
    whether the candidate becomes the applied matrix.
    """
    n = state.inv_core.shape[0]
    if wa.shape[1] != n:
        raise DimensionError(f"wa has {wa.shape[1]} columns, state is {n}x{n}")
    lam1 = state.strategy.lambda1
    ell = wa.shape[0]
    k = state.k + 1
    if k == 1:
        inner, fell_back = _inner_solve(lam1 * np.eye(ell) + wa @ wa.T, wa)
        core = (np.eye(n) - wa.T @ inner) / lam1
    else:
        bu = state.inv_core @ wa.T
        inner, fell_back = _inner_solve((k - 1) * np.eye(ell) + wa @ bu, bu.T)
        core = (k / (k - 1)) * (state.inv_core - bu @ inner)
    core = 0.5 * (core + core.T)

    strat = state.strategy
    candidate = strat.lambda2 * np.eye(n) + core
    eigvec = state.eigvec
    if math.isinf(strat.cap):
        accept = True
    else:
        top, eigvec = lambda_max(candidate, start=eigvec, return_vector=True)
        accept = top <= strat.cap
    return replace(
        state,
        k=k,
        inv_core=core,
        accepted=candidate if accept else state.accepted,
        reject_count=state.reject_count + (not accept),
        last_rejected=not accept,
        inner_fallbacks=state.inner_fallbacks + fell_back,
        eigvec=eigvec,
    )


def qn_dir(state, wa, wb, x):
    """-B_k (W^T A)^T (W^T A x - W^T b)."""
    return state.accepted @ gradient_dir(wa, wb, x)
