"""Ground truth for small instances: dense eigendecomposition and planted spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConditioningError, InputError
from .linalg import DataMatrix, as_operator, ensure_rng

MAX_DIM = 512


@dataclass(frozen=True)
class SpectrumOracle:
    """Descending eigenvalues, matching orthonormal eigenvector columns and the source matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    matrix: np.ndarray
    off_norm: float = 0.0
    sweeps: int = 0

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def delta(self) -> float:
        if self.eigenvalues.size < 2:
            return float(self.eigenvalues[0])
        return float(self.eigenvalues[0] - self.eigenvalues[1])

    @property
    def u1(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def alignment(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float((w @ self.u1) ** 2 / (w @ w))

    def residual(self) -> float:
        """``max_i ||X u_i - lambda_i u_i||``."""
        r = self.matrix @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return float(np.linalg.norm(r, axis=0).max())


def dense_eigendecompose(X, symmetry_tol: float = 1e-10, tol: float = 1e-12,
                         max_sweeps: int = 100) -> SpectrumOracle:
    """Full spectrum of a symmetric ``d x d`` matrix (``d <= 512``) by cyclic Jacobi.

    Sweeps run until the off-diagonal Frobenius norm is at most
    ``tol * max(1, ||X||_F)``. Eigenvector signs are fixed so that the
    largest-magnitude entry of each column is positive.
    """
    if hasattr(X, "backend") or isinstance(X, DataMatrix) or hasattr(X, "dense_covariance"):
        X = as_operator(X).dense()
    a = np.array(X.toarray() if sp.issparse(X) else X, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise InputError("need a non-empty square matrix")
    d = a.shape[0]
    if d > MAX_DIM:
        raise InputError(f"dense oracle is limited to d <= {MAX_DIM}, got {d}")
    asym = np.abs(a - a.T).max()
    if asym > symmetry_tol:
        raise InputError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    a = 0.5 * (a + a.T)
    target = tol * max(1.0, float(np.linalg.norm(a)))
    diag, v, off, sweeps = _kernels.jacobi_eigh(a, target, max_sweeps)
    if off > target:
        raise ConditioningError(f"Jacobi stalled at off-diagonal norm {off:.3e} after {sweeps} sweeps")
    order = np.argsort(-diag, kind="stable")
    vals = diag[order]
    vecs = v[:, order]
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(d)])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    return SpectrumOracle(vals, vecs, a, off, sweeps)


@dataclass(frozen=True)
class PlantInfo:
    """How a planted instance was built.

    ``eigenvalues`` are in the stored (normalized) units of the returned
    data; ``requested`` are the caller's values, recovered exactly by
    ``data.dense_covariance(original_units=True)``. ``counts[j]`` rows carry
    the direction ``basis[:, j]``.
    """

    requested: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray
    counts: np.ndarray
    scale: float

    @property
    def exact_in_stored_units(self) -> bool:
        return self.scale == 1.0


def _random_orthonormal(rng, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal((d, d)))
    s = np.sign(np.diag(r))
    s[s == 0] = 1.0
    return q * s


def _row_counts(lam: np.ndarray, n: int) -> np.ndarray:
    """Rows per positive eigenvalue, all ``n`` rows used, ``k_j >= n lam_j`` when possible."""
    pos = lam > 0
    need = np.where(pos, np.maximum(np.ceil(n * lam - 1e-9), 1), 0).astype(np.int64)
    if need.sum() > n:
        # norms above one are unavoidable; fall back to counts proportional to lam
        need = np.where(pos, 1, 0).astype(np.int64)
    spare = n - int(need.sum())
    if spare > 0:
        share = spare * lam / lam.sum()
        extra = np.floor(share).astype(np.int64)
        left = spare - int(extra.sum())
        order = np.argsort(-(share - extra), kind="stable")
        extra[order[:left]] += 1
        need = need + extra
    return need


def plant_spectrum(d: int, n: int, eigenvalues, rng=None, return_info: bool = False):
    """Rows whose empirical covariance is ``U diag(lambda) U^T`` for a random orthonormal ``U``.

    Each positive eigenvalue ``lambda_j`` gets ``k_j`` identical rows
    ``c_j u_j`` with ``c_j^2 = n lambda_j / k_j``; the rows are shuffled.
    When every ``c_j <= 1`` the stored covariance has exactly the requested
    spectrum. Otherwise (trace well above one) the rows are normalized as by
    :func:`normalize_dataset`, the stored spectrum is ``lambda / scale^2``
    and the requested one is recovered in original units.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if d < 1 or n < 1:
        raise InputError("need d >= 1 and n >= 1")
    if n < d:
        raise InputError("planting needs n >= d")
    if lam.size > d:
        raise InputError("more eigenvalues than dimensions")
    if np.any(lam < 0) or np.any(lam > 1.0):
        raise InputError("planted eigenvalues must lie in [0, 1]")
    if np.any(np.diff(lam) > 0):
        raise InputError("planted eigenvalues must be descending")
    if not np.any(lam > 0):
        raise InputError("need at least one positive eigenvalue")
    lam = np.concatenate([lam, np.zeros(d - lam.size)])
    rng = ensure_rng(rng)
    U = _random_orthonormal(rng, d)
    k = _row_counts(lam, n)
    pos = np.flatnonzero(k)
    c = np.sqrt(n * lam[pos] / k[pos])
    scale = float(max(1.0, c.max()))
    c = c / scale
    rows = np.repeat(U[:, pos].T * c[:, None], k[pos], axis=0)
    rows = rows[rng.permutation(n)]
    data = DataMatrix(sp.csr_matrix(rows), scale)
    if not return_info:
        return data
    info = PlantInfo(lam, lam / scale**2, U, k, scale)
    return data, info


def tail_mass(w, oracle: SpectrumOracle, threshold: float) -> float:
    """``sum_{i : lambda_i <= threshold} (w^T u_i)^2``."""
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > 1e-9:
        raise InputError("tail_mass expects a unit vector")
    sel = oracle.eigenvalues <= threshold
    proj = oracle.eigenvectors[:, sel].T @ w
    return float(proj @ proj)
