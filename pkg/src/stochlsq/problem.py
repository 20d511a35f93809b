"""Dense least-squares problems and the deterministic reference solvers.

Matrices are plain ``float64`` numpy arrays. Right-hand sides and iterates are
always 2-D (``m x r`` and ``n x r``) so single and multiple right-hand sides
share one code path.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, RankDeficientError

# |R_ii| <= RANK_RTOL * max|R_jj| flags a rank-deficient column.
RANK_RTOL = 1e-12


def make_rng(seed):
    """Counter-based Philox stream; identical seeds give identical bits."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def as_matrix(x, name="matrix"):
    """Coerce to a finite 2-D float64 array; 1-D input becomes a column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class LsProblem:
    """min_x 1/2 ||A x - b||^2 for each column b of ``rhs``."""

    a: np.ndarray
    rhs: np.ndarray
    x_true: Optional[np.ndarray] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        a = as_matrix(self.a, "A")
        rhs = as_matrix(self.rhs, "rhs")
        m, n = a.shape
        if m < n:
            raise DimensionError(f"need m >= n, got A of shape {a.shape}")
        if rhs.shape[0] != m:
            raise DimensionError(f"rhs has {rhs.shape[0]} rows, A has {m}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "rhs", rhs)
        if self.x_true is not None:
            xt = as_matrix(self.x_true, "x_true")
            if xt.shape != (n, rhs.shape[1]):
                raise DimensionError(
                    f"x_true must be {(n, rhs.shape[1])}, got {xt.shape}")
            object.__setattr__(self, "x_true", xt)
        if self.sigma is not None and not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def m(self):
        return self.a.shape[0]

    @property
    def n(self):
        return self.a.shape[1]

    @property
    def r(self):
        return self.rhs.shape[1]

    def column(self, j):
        """The single right-hand-side problem for column ``j``."""
        xt = None if self.x_true is None else self.x_true[:, j:j + 1]
        return LsProblem(self.a, self.rhs[:, j:j + 1], xt, self.sigma)


def generate_regression(m, n, sigma, seed):
    """Gaussian regression problem: A ~ N(0,1), x_true = 1, b = A x_true + eps."""
    if n < 1 or m < n:
        raise DimensionError(f"need m >= n >= 1, got m={m}, n={n}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = make_rng(seed)
    a = rng.standard_normal((m, n))
    x_true = np.ones((n, 1))
    noise = rng.standard_normal((m, 1))
    b = a @ x_true + sigma * noise
    return LsProblem(a, b, x_true, float(sigma))


def objective(problem, x, rhs_col=0):
    """1/2 ||A x - b_col||^2."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != problem.n:
        raise DimensionError(f"x has {x.shape[0]} entries, A has {problem.n} columns")
    res = problem.a @ x - problem.rhs[:, rhs_col]
    return 0.5 * float(res @ res)


def qr_solve(a, rhs):
    """Least-squares solution of ``a x = rhs`` column by column via Householder QR.

    Raises RankDeficientError when some |R_ii| <= 1e-12 * max|R_jj|.
    """
    a = as_matrix(a, "A")
    rhs = as_matrix(rhs, "rhs")
    m, n = a.shape
    if rhs.shape[0] != m:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, A has {m}")
    if m < n:
        raise RankDeficientError(f"A of shape {a.shape} cannot have full column rank")
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.abs(np.diag(r))
    if n and (diag.max() == 0.0 or diag.min() <= RANK_RTOL * diag.max()):
        raise RankDeficientError(
            f"A is rank deficient: min|R_ii|={diag.min():.3e}, max|R_ii|={diag.max():.3e}")
    return solve_triangular(r, q.T @ rhs, lower=False)


def weighted_solve(a, b, w):
    """argmin_x (b - A x)^T diag(w) (b - A x) via QR of the row-scaled system."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "b")
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != a.shape[0]:
        raise DimensionError(f"{w.shape[0]} weights for {a.shape[0]} rows")
    if not np.all(w > 0):
        raise ValueError("weights must be strictly positive")
    s = np.sqrt(w)[:, None]
    return qr_solve(s * a, s * b)


def pseudo_solve(mat, tol=0.0):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values <= ``tol`` are dropped; ``tol=0`` uses
    ``max(rows, cols) * eps * sigma_max``.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {mat.shape}")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    rows, cols = mat.shape
    if mat.size == 0:
        return np.zeros((cols, rows))
    if rows == 1:
        # one singular value, ||row||, with right singular vector row/||row||
        nrm2 = float(mat[0] @ mat[0])
        cutoff = tol if tol > 0.0 else cols * np.finfo(np.float64).eps * math.sqrt(nrm2)
        if nrm2 == 0.0 or math.sqrt(nrm2) <= cutoff:
            return np.zeros((cols, 1))
        return mat.T / nrm2
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    if tol == 0.0:
        tol = max(rows, cols) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    if not np.any(keep):
        return np.zeros((cols, rows))
    return (vt[keep].T / s[keep]) @ u[:, keep].T
