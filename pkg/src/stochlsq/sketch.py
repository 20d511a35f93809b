"""Random sketching matrices W (m x ell) with E[W W^T] = beta * I_m.

A drawn sample is never stored as a dense ``m x ell`` array. It keeps the
sorted set of rows where W is nonzero and the dense values of W on those rows
only, so ``W^T A`` reads exactly ``len(touched_rows)`` rows of ``A``.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np

from .errors import DimensionError

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SparseRandom:
    """i.i.d. entries: +-sqrt(beta/(ell*psi)) each w.p. psi/2, else 0.

    psi=1/3, beta=ell is Achlioptas' matrix; psi=1, beta=ell is Rademacher.
    """

    m: int
    ell: int
    psi: float
    beta: Optional[float] = None

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", float(self.ell))
        if not (0.0 < self.psi <= 1.0):
            raise ValueError(f"psi must lie in (0, 1], got {self.psi}")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        _check_dims(self.m, self.ell)

    @property
    def magnitude(self):
        return math.sqrt(self.beta / (self.ell * self.psi))


@dataclass(frozen=True, eq=False)
class GeneralizedKaczmarz:
    """W is a uniformly chosen column block Q_i of an orthogonal Q = [Q_1 ... Q_p].

    ``blocks`` holds half-open column ranges ``(start, stop)``; ``q=None``
    means the identity, i.e. (block) Kaczmarz row selection.
    """

    m: int
    blocks: Tuple[Tuple[int, int], ...]
    q: Optional[np.ndarray] = None

    def __post_init__(self):
        blocks = tuple((int(s), int(e)) for s, e in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        pos = 0
        for s, e in blocks:
            if s != pos or e <= s:
                raise ValueError(f"blocks must be contiguous, nonempty and start at 0: {blocks}")
            pos = e
        if pos != self.m:
            raise ValueError(f"blocks cover {pos} columns, expected m={self.m}")
        if self.q is not None:
            q = np.asarray(self.q, dtype=np.float64)
            if q.shape != (self.m, self.m):
                raise DimensionError(f"q must be {self.m}x{self.m}, got {q.shape}")
            dev = np.max(np.abs(q.T @ q - np.eye(self.m)))
            if dev > ORTHO_TOL:
                raise ValueError(f"q is not orthogonal: max|Q^T Q - I| = {dev:.3e}")
            object.__setattr__(self, "q", q)

    @property
    def p(self):
        return len(self.blocks)

    @cached_property
    def block_samples(self):
        """The p possible realizations, precomputed."""
        out = []
        for s, e in self.blocks:
            if self.q is None:
                rows = np.arange(s, e)
                vals = np.eye(e - s)
            else:
                cols = self.q[:, s:e]
                rows = np.flatnonzero(np.any(cols != 0.0, axis=1))
                vals = cols[rows]
            out.append(SketchSample(self.m, e - s, rows, vals))
        return tuple(out)


@dataclass(frozen=True)
class KaczmarzUniformColumns:
    """ell distinct columns of I_m, uniform without replacement."""

    m: int
    ell: int

    def __post_init__(self):
        _check_dims(self.m, self.ell)


@dataclass(frozen=True)
class SparseRademacher:
    """Independent columns, each with p uniformly placed +-1 entries."""

    m: int
    ell: int
    p: int

    def __post_init__(self):
        _check_dims(self.m, self.ell)
        if not 1 <= self.p <= self.m:
            raise ValueError(f"need 1 <= p <= m, got p={self.p}, m={self.m}")


SketchSpec = Union[SparseRandom, GeneralizedKaczmarz, KaczmarzUniformColumns, SparseRademacher]


def _check_dims(m, ell):
    if m < 1 or ell < 1:
        raise ValueError(f"m and ell must be positive, got m={m}, ell={ell}")


@dataclass(frozen=True, eq=False)
class SketchSample:
    """One realization of W restricted to its nonzero rows.

    ``values[i, j]`` is ``W[touched_rows[i], j]``.
    """

    m: int
    ell: int
    touched_rows: np.ndarray
    values: np.ndarray = field(repr=False)

    @property
    def columns(self):
        """Per-column sparse lists of ``(row, value)``."""
        cols = []
        for j in range(self.ell):
            nz = np.flatnonzero(self.values[:, j])
            cols.append([(int(self.touched_rows[i]), float(self.values[i, j])) for i in nz])
        return cols

    def to_dense(self):
        w = np.zeros((self.m, self.ell))
        w[self.touched_rows] = self.values
        return w


def beta_of(spec):
    """The constant beta with E[W W^T] = beta * I_m."""
    if isinstance(spec, SparseRandom):
        return float(spec.beta)
    if isinstance(spec, GeneralizedKaczmarz):
        return 1.0 / spec.p
    if isinstance(spec, KaczmarzUniformColumns):
        return spec.ell / spec.m
    if isinstance(spec, SparseRademacher):
        return spec.ell * spec.p / spec.m
    raise TypeError(f"unknown sketch spec {spec!r}")


def draw(spec, rng):
    """Draw one SketchSample from ``spec`` using generator ``rng``."""
    if isinstance(spec, GeneralizedKaczmarz):
        return spec.block_samples[int(rng.integers(spec.p))]
    if isinstance(spec, KaczmarzUniformColumns):
        rows = np.sort(rng.choice(spec.m, spec.ell, replace=False))
        return SketchSample(spec.m, spec.ell, rows, np.eye(spec.ell))
    if isinstance(spec, SparseRademacher):
        return _draw_rademacher(spec, rng)
    if isinstance(spec, SparseRandom):
        return _draw_sparse_random(spec, rng)
    raise TypeError(f"unknown sketch spec {spec!r}")


def _assemble(m, ell, rows, cols, vals):
    touched, inv = np.unique(rows, return_inverse=True)
    block = np.zeros((touched.size, ell))
    block[inv, cols] = vals
    return SketchSample(m, ell, touched, block)


def _draw_sparse_random(spec, rng):
    total = spec.m * spec.ell
    # i.i.d. Bernoulli(psi) support == Binomial count + uniform subset of that size
    nnz = int(rng.binomial(total, spec.psi))
    flat = rng.choice(total, nnz, replace=False, shuffle=False) if nnz else np.empty(0, np.int64)
    signs = 2.0 * rng.integers(0, 2, size=nnz) - 1.0
    rows, cols = np.divmod(flat, spec.ell)
    return _assemble(spec.m, spec.ell, rows, cols, signs * spec.magnitude)


def _draw_rademacher(spec, rng):
    m, ell, p = spec.m, spec.ell, spec.p
    rows = np.empty(ell * p, dtype=np.int64)
    for j in range(ell):
        rows[j * p:(j + 1) * p] = rng.choice(m, p, replace=False, shuffle=False)
    cols = np.repeat(np.arange(ell), p)
    signs = 2.0 * rng.integers(0, 2, size=ell * p) - 1.0
    return _assemble(m, ell, rows, cols, signs)


def sketch_apply(sample, a, b):
    """Return ``(W^T A, W^T b, rows_touched)`` reading only the touched rows."""
    if a.shape[0] != sample.m or b.shape[0] != sample.m:
        raise DimensionError(
            f"sketch has m={sample.m}, A has {a.shape[0]} rows, b has {b.shape[0]} rows")
    rows = sample.touched_rows
    if rows.size == 0:
        return np.zeros((sample.ell, a.shape[1])), np.zeros((sample.ell, b.shape[1])), 0
    vt = sample.values.T
    return vt @ a[rows], vt @ b[rows], int(rows.size)


def enumerate_outcomes(spec, max_outcomes=10_000):
    """All equally likely samples of a finite family, or None if too many/infinite."""
    if isinstance(spec, GeneralizedKaczmarz):
        return spec.block_samples if spec.p <= max_outcomes else None
    if isinstance(spec, KaczmarzUniformColumns):
        if math.comb(spec.m, spec.ell) > max_outcomes:
            return None
        eye = np.eye(spec.ell)
        return tuple(SketchSample(spec.m, spec.ell, np.array(c), eye)
                     for c in itertools.combinations(range(spec.m), spec.ell))
    return None


def _random_subsets(rng, n_sets, m, size):
    """``n_sets`` independent uniform ``size``-subsets of range(m), one per row.

    The indices of the ``size`` smallest of m i.i.d. uniform keys form a
    uniformly distributed subset.
    """
    keys = rng.random((n_sets, m))
    if size == m:
        return np.broadcast_to(np.arange(m), (n_sets, m))
    return np.argpartition(keys, size - 1, axis=1)[:, :size]


def _dense_batch(spec, rng, count):
    """``count`` draws of a non-Kaczmarz-block family as one m x (count*ell) matrix."""
    m, ell = spec.m, spec.ell
    width = count * ell
    if isinstance(spec, SparseRandom):
        mask = rng.random((m, width)) < spec.psi
        signs = 2.0 * rng.integers(0, 2, size=(m, width)) - 1.0
        return np.where(mask, signs * spec.magnitude, 0.0)
    dense = np.zeros((m, width))
    if isinstance(spec, SparseRademacher):
        rows = _random_subsets(rng, width, m, spec.p)
        cols = np.broadcast_to(np.arange(width)[:, None], rows.shape)
        dense[rows, cols] = 2.0 * rng.integers(0, 2, size=rows.shape) - 1.0
        return dense
    rows = _random_subsets(rng, count, m, ell)
    dense[rows.ravel(), np.arange(width)] = 1.0
    return dense


def empirical_moment_deviation(spec, n_samples, rng, stratified=False, chunk=512):
    """max |(1/(beta N)) sum_t W_t W_t^T - I_m| over N draws.

    With ``stratified=True`` and a finite family, outcomes are cycled through
    in order instead of sampled (exact when N is a multiple of the outcome
    count). Random draws are generated in vectorized batches of ``chunk``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    outcomes = enumerate_outcomes(spec) if stratified else None
    if stratified and outcomes is None:
        raise ValueError(f"stratified enumeration unavailable for {type(spec).__name__}")
    m, beta = spec.m, beta_of(spec)
    if isinstance(spec, GeneralizedKaczmarz) or outcomes is not None:
        # sum over draws = sum over distinct outcomes weighted by their counts
        pool = outcomes if outcomes is not None else spec.block_samples
        if outcomes is not None:
            counts = np.bincount(np.arange(n_samples) % len(pool), minlength=len(pool))
        else:
            counts = np.bincount(rng.integers(len(pool), size=n_samples), minlength=len(pool))
        acc = np.zeros((m, m))
        for sample, c in zip(pool, counts):
            if c:
                w = sample.to_dense()
                acc += c * (w @ w.T)
    else:
        acc = np.zeros((m, m))
        done = 0
        while done < n_samples:
            count = min(chunk, n_samples - done)
            dense = _dense_batch(spec, rng, count)
            acc += dense @ dense.T
            done += count
    return float(np.max(np.abs(acc / (beta * n_samples) - np.eye(m))))


def kaczmarz_partition(q, sizes, m=None):
    """GeneralizedKaczmarz spec with contiguous column blocks of the given sizes."""
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ValueError(f"block sizes must be positive: {sizes}")
    if q is not None:
        q = np.asarray(q, dtype=np.float64)
        if m is None:
            m = q.shape[0]
    if m is None:
        m = sum(sizes)
    if sum(sizes) != m:
        raise ValueError(f"block sizes sum to {sum(sizes)}, expected m={m}")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    blocks = tuple((int(s), int(e)) for s, e in zip(bounds[:-1], bounds[1:]))
    return GeneralizedKaczmarz(m, blocks, q)


def block_kaczmarz(m, ell):
    """Identity blocks of size ``ell`` (the last one shorter if ell does not divide m)."""
    full, rest = divmod(m, ell)
    return kaczmarz_partition(None, [ell] * full + ([rest] if rest else []), m)


def row_kaczmarz(m):
    """Classical randomized Kaczmarz: one row of A per iteration."""
    return kaczmarz_partition(None, [1] * m, m)
