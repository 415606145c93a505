"""Sparse rows, implicit covariance operators and seeded randomness.

Everything downstream multiplies against one of two backends:

* :class:`DataMatrix`, the empirical covariance ``X = (1/n) sum_i x_i x_i^T``
  of a set of sparse rows with ``||x_i|| <= 1``;
* :class:`DenseEnsemble`, a weighted average ``X = sum_i p_i A_i`` of sparse
  symmetric matrices, optionally shifted by the identity to make it PSD.

Both expose ``matvec`` and are wrapped by :class:`CovarianceOperator`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InputError

NORM_SLACK = 1e-12


@dataclass(frozen=True)
class SparseVector:
    """Sorted ``(index, value)`` pairs of a vector in ``R^dim``."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=float)
        if self.dim < 1:
            raise InputError(f"dimension must be positive, got {self.dim}")
        if idx.shape != val.shape or idx.ndim != 1:
            raise InputError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise InputError("sparse indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise InputError(f"sparse index out of range for dim {self.dim}")
        if np.any(val == 0.0):
            raise InputError("explicit zeros are not stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=float).ravel()
        nz = np.flatnonzero(x)
        return cls(x.size, nz, x[nz])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def _check_vector(v, d: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise InputError(f"expected a vector of shape ({d},), got {v.shape}")
    return v


class DataMatrix:
    """Row collection ``{x_i}`` defining ``X = (1/n) sum_i x_i x_i^T``.

    Rows are held as a CSR matrix. ``scale`` is the factor the raw rows were
    divided by, so covariance eigenvalues in the caller's original units are
    ``scale**2`` times the stored ones.
    """

    def __init__(self, csr: sp.csr_matrix, scale: float = 1.0):
        csr = sp.csr_matrix(csr, dtype=float)
        csr.eliminate_zeros()
        csr.sort_indices()
        n, d = csr.shape
        if n < 1 or d < 1:
            raise InputError("a data matrix needs at least one row and one column")
        if not scale > 0:
            raise InputError(f"scale must be positive, got {scale}")
        self.csr = csr
        self.scale = float(scale)
        self._row_norms_sq = np.asarray(csr.multiply(csr).sum(axis=1)).ravel()
        if self._row_norms_sq.max() > 1.0 + NORM_SLACK:
            raise InputError(
                "rows must satisfy ||x_i|| <= 1; use normalize_dataset on raw data"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[SparseVector], scale: float = 1.0) -> "DataMatrix":
        if not rows:
            raise InputError("no rows given")
        d = rows[0].dim
        if any(r.dim != d for r in rows):
            raise InputError("all rows must share one dimension")
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r.nnz for r in rows])
        indices = np.concatenate([r.indices for r in rows]) if indptr[-1] else np.zeros(0, np.int64)
        data = np.concatenate([r.values for r in rows]) if indptr[-1] else np.zeros(0)
        return cls(sp.csr_matrix((data, indices, indptr), shape=(len(rows), d)), scale)

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def d(self) -> int:
        return self.csr.shape[1]

    @property
    def nnz_total(self) -> int:
        return int(self.csr.nnz)

    @property
    def row_norms_sq(self) -> np.ndarray:
        return self._row_norms_sq

    @property
    def rows(self) -> list[SparseVector]:
        c = self.csr
        return [
            SparseVector(self.d, c.indices[c.indptr[i]:c.indptr[i + 1]],
                         c.data[c.indptr[i]:c.indptr[i + 1]])
            for i in range(self.n)
        ]

    def matvec(self, v) -> np.ndarray:
        v = _check_vector(v, self.d)
        return self.csr.T @ (self.csr @ v) / self.n

    def dense_covariance(self, original_units: bool = False) -> np.ndarray:
        a = self.csr.toarray()
        x = a.T @ a / self.n
        return x * self.scale**2 if original_units else x

    def take(self, idx) -> "DataMatrix":
        """Sub-dataset made of the given row indices (repeats allowed)."""
        return DataMatrix(self.csr[np.asarray(idx, dtype=np.int64)], self.scale)

    def rank_one_ensemble(self) -> "DenseEnsemble":
        """The same covariance written as a uniform ensemble of ``x_i x_i^T``."""
        mats = [sp.csr_matrix(self.csr[i].T @ self.csr[i]) for i in range(self.n)]
        return DenseEnsemble(np.full(self.n, 1.0 / self.n), mats)

    def __repr__(self):
        return f"DataMatrix(n={self.n}, d={self.d}, nnz={self.nnz_total}, scale={self.scale:g})"


def normalize_dataset(raw) -> DataMatrix:
    """Divide every row by the largest row norm and record that factor.

    ``raw`` may be a 2-d array, a scipy sparse matrix, a list of
    :class:`SparseVector` or an existing :class:`DataMatrix` (whose stored
    rows are re-normalized and whose scale is compounded).
    """
    prior = 1.0
    if isinstance(raw, DataMatrix):
        prior = raw.scale
        csr = raw.csr.copy()
    elif sp.issparse(raw):
        csr = sp.csr_matrix(raw, dtype=float)
    elif isinstance(raw, (list, tuple)) and raw and isinstance(raw[0], SparseVector):
        d = raw[0].dim
        if any(r.dim != d for r in raw):
            raise InputError("all rows must share one dimension")
        csr = sp.csr_matrix(np.vstack([r.to_dense() for r in raw]))
    else:
        arr = np.atleast_2d(np.asarray(raw, dtype=float))
        if arr.ndim != 2 or arr.size == 0:
            raise InputError("raw rows must form a non-empty 2-d array")
        csr = sp.csr_matrix(arr)
    csr.eliminate_zeros()
    norms = np.sqrt(np.asarray(csr.multiply(csr).sum(axis=1)).ravel())
    scale = float(norms.max()) if norms.size else 0.0
    if scale == 0.0:
        raise InputError("dataset has no nonzero row")
    if abs(scale - 1.0) <= 1e-14:
        # already normalized up to rounding; keeps the operation idempotent
        return DataMatrix(csr, prior)
    csr = csr / scale
    # Division can leave the largest norm a hair above one.
    norms = np.sqrt(np.asarray(csr.multiply(csr).sum(axis=1)).ravel())
    top = norms.max()
    if top > 1.0:
        csr = csr / top
        scale *= top
    return DataMatrix(csr, prior * scale)


class DenseEnsemble:
    """Weighted average ``sum_i p_i A_i`` of sparse symmetric matrices.

    ``norm_bound`` is the caller's declaration that ``||A_i|| <= norm_bound``;
    it feeds the SVRG smoothness constant and is spot-checked by tests rather
    than verified here. With ``shifted=True`` every component becomes
    ``A_i + I``, which keeps the average PSD when ``norm_bound <= 1``.
    """

    def __init__(self, weights, matrices, shifted: bool = False, norm_bound: float = 1.0,
                 symmetry_tol: float = 1e-12):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size != len(matrices) or w.size == 0:
            raise InputError("need one weight per matrix and at least one matrix")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("weights must be a probability vector")
        mats = [sp.csr_matrix(a, dtype=float) for a in matrices]
        d = mats[0].shape[0]
        for a in mats:
            if a.shape != (d, d):
                raise InputError("ensemble matrices must all be d x d")
            asym = a - a.T
            if asym.nnz and np.abs(asym.data).max() > symmetry_tol:
                raise InputError("ensemble matrices must be symmetric")
            a.eliminate_zeros()
            a.sort_indices()
        self.weights = w
        self.matrices = mats
        self.shifted = bool(shifted)
        self.norm_bound = float(norm_bound)
        self._coo = None
        self._sum = None

    @property
    def n(self) -> int:
        return len(self.matrices)

    @property
    def d(self) -> int:
        return self.matrices[0].shape[0]

    @property
    def S(self) -> int:
        return max(a.nnz for a in self.matrices)

    @property
    def N(self) -> int:
        return sum(a.nnz for a in self.matrices)

    @property
    def nnz_total(self) -> int:
        return self.N

    def with_shift(self, shifted: bool) -> "DenseEnsemble":
        return DenseEnsemble(self.weights, self.matrices, shifted, self.norm_bound)

    def matvec(self, v) -> np.ndarray:
        v = _check_vector(v, self.d)
        if self._sum is None:
            acc = sp.csr_matrix((self.d, self.d))
            for p, a in zip(self.weights, self.matrices):
                if p:
                    acc = acc + p * a
            self._sum = sp.csr_matrix(acc)
        out = self._sum @ v
        if self.shifted:
            out = out + v
        return out

    def dense_covariance(self, original_units: bool = False) -> np.ndarray:
        x = sum(p * a.toarray() for p, a in zip(self.weights, self.matrices))
        return x + np.eye(self.d) if self.shifted else x

    def flat_coo(self):
        """All components as one concatenated COO triplet plus offsets."""
        if self._coo is None:
            rows, cols, vals, ptr = [], [], [], [0]
            for a in self.matrices:
                c = a.tocoo()
                rows.append(c.row)
                cols.append(c.col)
                vals.append(c.data)
                ptr.append(ptr[-1] + c.nnz)
            self._coo = (
                np.concatenate(rows).astype(np.int64),
                np.concatenate(cols).astype(np.int64),
                np.concatenate(vals).astype(float),
                np.asarray(ptr, dtype=np.int64),
            )
        return self._coo


class CovarianceOperator:
    """Uniform front for either backend, with an optional cached top eigenvalue."""

    def __init__(self, backend, lambda1_estimate: float | None = None):
        if isinstance(backend, CovarianceOperator):
            backend = backend.backend
        if not isinstance(backend, (DataMatrix, DenseEnsemble)):
            raise InputError(f"unsupported covariance backend {type(backend).__name__}")
        self.backend = backend
        self.lambda1_estimate = lambda1_estimate

    @property
    def d(self) -> int:
        return self.backend.d

    @property
    def n(self) -> int:
        return self.backend.n

    @property
    def is_ensemble(self) -> bool:
        return isinstance(self.backend, DenseEnsemble)

    def matvec(self, v) -> np.ndarray:
        return self.backend.matvec(v)

    def dense(self) -> np.ndarray:
        return self.backend.dense_covariance()


def as_operator(x) -> CovarianceOperator:
    return x if isinstance(x, CovarianceOperator) else CovarianceOperator(x)


def cov_matvec(op, v) -> np.ndarray:
    """``X v`` for a covariance operator or either raw backend."""
    return as_operator(op).matvec(v)


@dataclass(frozen=True)
class ShiftedOperator:
    """``M = lam * I - X``; positive definite whenever ``lam > lambda_1(X)``."""

    base: CovarianceOperator
    lam: float
    known_gap_lower: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "base", as_operator(self.base))

    @property
    def d(self) -> int:
        return self.base.d

    def matvec(self, v) -> np.ndarray:
        # Fixed evaluation order: lam * v first, then subtract X v.
        return self.lam * v - self.base.matvec(v)


class SeededRng:
    """Seeded PCG64 stream (numpy ``Generator``).

    Single-owner; use :meth:`spawn` to hand independent streams to workers
    or sub-solvers.
    """

    algorithm = "PCG64"

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._ss = seed
            self.seed = int(seed.entropy) if isinstance(seed.entropy, int) else None
        else:
            if not 0 <= int(seed) < 2**64:
                raise InputError("seed must be a 64-bit unsigned integer")
            self.seed = int(seed)
            self._ss = np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._ss))

    def spawn(self, k: int = 1) -> list["SeededRng"]:
        return [SeededRng(s) for s in self._ss.spawn(k)]

    def child(self) -> "SeededRng":
        return self.spawn(1)[0]

    def normal(self, size) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, size) -> np.ndarray:
        return self.gen.random(size)

    def integers(self, high: int, size=None):
        return self.gen.integers(0, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)


def ensure_rng(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    if rng is None:
        return SeededRng(0)
    return SeededRng(int(rng))


def random_unit_vector(rng: SeededRng, d: int) -> np.ndarray:
    """Uniform sample from the unit sphere in ``R^d`` (normalized Gaussian)."""
    if d < 1:
        raise InputError("dimension must be at least 1")
    rng = ensure_rng(rng)
    while True:
        g = rng.normal(d)
        nrm = np.linalg.norm(g)
        if nrm > 0:
            return g / nrm
