"""Where stochastic Newton iterates end up, and how that compares to least squares.

Stochastic Newton converges to ``x_tilde = (P A)^{-1} P b`` with
``P = E[(W^T A)^+ W^T]``, which is generally not the least-squares solution
``x_hat``. The 3x2 example family

    A = [[mu, 0], [0, 1], [1, -1]],   b = [1, 1, nu]

has both in closed form and is used to check everything else.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .matrix_io import format_float
from .problem import as_matrix, make_rng, pseudo_solve, qr_solve
from .sketch import draw, enumerate_outcomes


@dataclass(frozen=True)
class ExampleParams:
    mu: float
    nu: float

    def __post_init__(self):
        if self.mu == 0:
            raise ValueError("mu must be nonzero (the first row of A vanishes at mu = 0)")


def example_problem(p):
    a = np.array([[p.mu, 0.0], [0.0, 1.0], [1.0, -1.0]])
    b = np.array([[1.0], [1.0], [p.nu]])
    return a, b


def example_solutions(p):
    """Closed-form ``(x_hat, x_tilde, omega)`` for single-row Kaczmarz sketches."""
    mu, nu = p.mu, p.nu
    den = 2 * mu * mu + 1
    xhat = np.array([[2 * mu + nu + 1], [mu - mu * mu * nu + mu * mu + 1]]) / den
    xtilde = np.array([[1 + nu + 3 / mu], [3 - nu + 1 / mu]]) / 4
    return xhat, xtilde, float(np.linalg.norm(xhat - xtilde))


def row_kaczmarz_P(a, expectation=False):
    """A^T diag(1/||a_i||^2) for single-row Kaczmarz sketches.

    With ``expectation=True`` the result is divided by m, which makes it the
    actual mean E[(W^T A)^+ W^T] over the m equally likely rows. The scale
    does not change ``x_tilde``.
    """
    a = as_matrix(a, "A")
    norms = np.array([float(row @ row) for row in a])
    if np.any(norms == 0):
        raise ValueError("A has a zero row")
    p = a.T / norms
    return p / a.shape[0] if expectation else p


@dataclass(frozen=True, eq=False)
class PEstimate:
    p_hat: np.ndarray
    n_samples: int
    std_err: float
    exhaustive: bool = False


def _h_matrix(sample, a, svd_tol):
    """(W^T A)^+ W^T as a dense n x m matrix."""
    rows = sample.touched_rows
    h = np.zeros((a.shape[1], a.shape[0]))
    if rows.size:
        wa = sample.values.T @ a[rows]
        h[:, rows] = pseudo_solve(wa, svd_tol) @ sample.values.T
    return h


def estimate_P(spec, a, n_samples=10_000, seed=0, svd_tol=0.0, exhaustive=None):
    """Estimate P = E[(W^T A)^+ W^T].

    For finite sketch families (Kaczmarz variants with at most 10^4 outcomes)
    the expectation is taken exactly over all outcomes unless
    ``exhaustive=False``; otherwise it is a Monte Carlo mean over
    ``n_samples`` draws with its max entrywise standard error.
    """
    a = as_matrix(a, "A")
    outcomes = enumerate_outcomes(spec) if exhaustive in (None, True) else None
    if exhaustive and outcomes is None:
        raise ValueError(f"{type(spec).__name__} has no small finite sample space")
    if outcomes is not None:
        total = np.zeros((a.shape[1], a.shape[0]))
        for sample in outcomes:
            total += _h_matrix(sample, a, svd_tol)
        return PEstimate(total / len(outcomes), len(outcomes), 0.0, exhaustive=True)

    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rng = make_rng(seed)
    total = np.zeros((a.shape[1], a.shape[0]))
    total_sq = np.zeros_like(total)
    for _ in range(n_samples):
        h = _h_matrix(draw(spec, rng), a, svd_tol)
        total += h
        total_sq += h * h
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return PEstimate(mean, n_samples, float(np.sqrt(var.max() / n_samples)))


def x_tilde_from_P(a, b, p):
    """Solve (P A) x = P b by QR of P A."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "b")
    p = as_matrix(p, "P")
    return qr_solve(p @ a, p @ b)


def covariances(sigma, a, p):
    """Noise covariances of x_hat and x_tilde under Var(eps) = sigma^2 I.

    Var(x_hat)   = sigma^2 (A^T A)^{-1}
    Var(x_tilde) = sigma^2 (P A)^{-1} P P^T (A^T P^T)^{-1}
    """
    a = as_matrix(a, "A")
    p = as_matrix(p, "P")
    a_pinv = qr_solve(a, np.eye(a.shape[0]))
    g = qr_solve(p @ a, p)
    s2 = float(sigma) ** 2
    return s2 * (a_pinv @ a_pinv.T), s2 * (g @ g.T)


def omega_sweep(mu_grid, nu_grid):
    """Rows ``(mu, nu, omega)`` over the grid, mu-major."""
    rows = []
    for mu in mu_grid:
        for nu in nu_grid:
            rows.append((float(mu), float(nu), example_solutions(ExampleParams(mu, nu))[2]))
    return rows


def write_omega_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mu", "nu", "omega"])
        for row in rows:
            writer.writerow([format_float(v) for v in row])


@dataclass(frozen=True, eq=False)
class UnbiasednessSummary:
    x_true: np.ndarray
    mean_xhat: np.ndarray
    mean_xtilde: np.ndarray
    se_xhat: np.ndarray
    se_xtilde: np.ndarray
    cov_xhat: np.ndarray
    cov_xtilde: np.ndarray
    n_trials: int

    def csv_rows(self):
        """``(estimator, component, x_true, mean, se, var)`` rows."""
        out = []
        for name, mean, se, cov in (("xhat", self.mean_xhat, self.se_xhat, self.cov_xhat),
                                    ("xtilde", self.mean_xtilde, self.se_xtilde, self.cov_xtilde)):
            for i in range(mean.shape[0]):
                out.append((name, i, self.x_true[i, 0], mean[i], se[i], cov[i, i]))
        return out


def unbiasedness_study(p, sigma, n_trials, seed=0):
    """Monte Carlo over noise draws b = A x_true + eps for both estimators.

    ``x_true`` is the least-squares solution of the example at (mu, nu), so
    ``b = A x_true`` is consistent and both estimators equal it at sigma = 0.
    """
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    a, b = example_problem(p)
    x_true = qr_solve(a, b)
    rng = make_rng(seed)
    rhs = a @ x_true + sigma * rng.standard_normal((a.shape[0], n_trials))
    xhat = qr_solve(a, rhs)
    xtilde = x_tilde_from_P(a, rhs, row_kaczmarz_P(a))

    def stats(samples):
        mean = samples.mean(axis=1)
        cov = np.atleast_2d(np.cov(samples, ddof=1))
        return mean, np.sqrt(np.diag(cov) / n_trials), cov

    mh, sh, ch = stats(xhat)
    mt, st, ct = stats(xtilde)
    return UnbiasednessSummary(x_true, mh, mt, sh, st, ch, ct, n_trials)
