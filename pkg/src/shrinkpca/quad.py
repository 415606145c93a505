"""Minimizers of ``F(z) = 1/2 z^T (lam I - X) z - w^T z``.

``z* = (lam I - X)^{-1} w``, so every solver here is an approximate
inverse-matrix product. Backends:

* :func:`exact_solve` - conjugate gradients with a residual certificate,
  used as the verification oracle and as the deterministic inner solver;
* :func:`svrg_solve` - SVRG over the rank-one components
  ``f_i(z) = 1/2 z^T (lam I - x_i x_i^T) z - w^T z`` (each non-convex,
  the sum strongly convex);
* :func:`svrg_dense_solve` - the same with components ``lam I - A_i``
  sampled with probabilities ``p_i``;
* :func:`catalyst_solve` - accelerated proximal point outer loop that calls
  SVRG on ``F(z) + kappa/2 ||z - y||^2``.

All stochastic solvers stop on the gradient certificate
``||grad F(z)|| <= sigma * tol``, which gives ``||z - z*|| <= tol`` whenever
``sigma`` is a valid strong convexity lower bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import _kernels
from .errors import ConditioningError, InputError, StepSizeError, ToleranceError
from .linalg import DataMatrix, DenseEnsemble, SeededRng, ShiftedOperator, ensure_rng

log = logging.getLogger(__name__)

M_CAP = 10**8
_CHUNK = 1 << 18


def default_beta(op: ShiftedOperator) -> float:
    """Largest component smoothness constant for the operator's backend.

    Rank-one rows: the Hessian ``lam I - x x^T`` has eigenvalues ``lam`` and
    ``lam - ||x||^2``. Ensemble components with ``||A_i|| <= b`` (plus the
    identity when shifted) give ``|lam - c| + b``.
    """
    back = op.base.backend
    lam = op.lam
    if isinstance(back, DataMatrix):
        r = float(back.row_norms_sq.max())
        return max(abs(lam), abs(lam - r))
    c = 1.0 if back.shifted else 0.0
    return abs(lam - c) + back.norm_bound


@dataclass
class QuadraticProblem:
    operator: ShiftedOperator
    w: np.ndarray
    sigma: float
    beta: float | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.operator.d,):
            raise InputError("linear term has the wrong dimension")
        if self.beta is None:
            self.beta = default_beta(self.operator)

    @property
    def lam(self) -> float:
        return self.operator.lam

    @property
    def d(self) -> int:
        return self.operator.d

    def value(self, z) -> float:
        return float(0.5 * z @ self.operator.matvec(z) - self.w @ z)

    def gradient(self, z) -> np.ndarray:
        return self.operator.matvec(z) - self.w

    def augmented(self, kappa: float, y) -> "QuadraticProblem":
        """``F(z) + kappa/2 ||z - y||^2`` as a problem of the same family."""
        op = ShiftedOperator(self.operator.base, self.lam + kappa)
        return QuadraticProblem(op, self.w + kappa * np.asarray(y), self.sigma + kappa,
                                self.beta + kappa)


@dataclass
class SolveResult:
    """Output of one inner solve plus its work counters.

    ``full_grads`` counts full passes over the data (anchor gradients, CG
    matvecs); ``component_grads`` counts stochastic steps, each of which
    touches one component.
    """

    z: np.ndarray
    converged: bool
    grad_norm: float
    epochs: int = 0
    full_grads: int = 0
    component_grads: int = 0
    outer_iterations: int = 0

    def passes(self, n: int) -> float:
        return self.full_grads + self.component_grads / n


def suboptimality_to_distance(prob: QuadraticProblem, F_gap: float) -> float:
    """Distance bound ``sqrt(2 F_gap / sigma)`` implied by strong convexity."""
    if not prob.sigma > 0:
        raise InputError("strong convexity parameter must be positive")
    if F_gap < 0:
        raise InputError("suboptimality gap must be non-negative")
    return math.sqrt(2.0 * F_gap / prob.sigma)


def exact_solve(prob: QuadraticProblem, tol: float = 1e-10, z0=None,
                max_iter: int | None = None) -> SolveResult:
    """Conjugate gradients until ``||M z - w|| <= sigma * tol``.

    The residual is recomputed from scratch before the certificate is
    accepted, so recurrence drift cannot fake convergence.
    """
    if not prob.sigma > 0:
        raise InputError("exact_solve needs sigma > 0")
    mv = prob.operator.matvec
    cap = max_iter if max_iter is not None else 10 * prob.d
    target = prob.sigma * tol
    z = np.zeros(prob.d) if z0 is None else np.array(z0, dtype=float)
    r = prob.w - mv(z)
    matvecs = 1
    rr = float(r @ r)
    it = 0
    while True:
        if math.sqrt(rr) <= target:
            r = prob.w - mv(z)
            matvecs += 1
            rr = float(r @ r)
            if math.sqrt(rr) <= target:
                return SolveResult(z, True, math.sqrt(rr), full_grads=matvecs)
        if it >= cap:
            raise ConditioningError(
                f"CG did not reach residual {target:.3e} in {cap} iterations "
                f"(residual {math.sqrt(rr):.3e}, lam={prob.lam:.6g})"
            )
        # restart the direction from the true residual
        p = r.copy()
        while it < cap and math.sqrt(rr) > target:
            q = mv(p)
            matvecs += 1
            pq = float(p @ q)
            if not pq > 0:
                raise ConditioningError(
                    f"operator is not positive definite along a CG direction (lam={prob.lam:.6g})"
                )
            a = rr / pq
            z += a * p
            r -= a * q
            rr_new = float(r @ r)
            p = r + (rr_new / rr) * p
            rr = rr_new
            it += 1


@dataclass
class SvrgConfig:
    """Step size ``eta``, inner length ``m`` and epoch cap ``T``.

    In ``auto`` mode ``eta = sigma / (7 beta^2)`` and
    ``m = ceil(1 / (2 eta^2 beta^2))`` are derived per problem; in ``manual``
    mode the given values are used as is. ``T=None`` lets the solver derive a
    cap from the halving rate.
    """

    rng: SeededRng = field(default_factory=lambda: SeededRng(0))
    mode: str = "auto"
    eta: float | None = None
    m: int | None = None
    T: int | None = None
    p_fail: float = 0.01

    def __post_init__(self):
        if self.mode not in ("auto", "manual"):
            raise InputError(f"unknown SVRG mode {self.mode!r}")
        if self.mode == "manual" and (self.eta is None or self.m is None):
            raise InputError("manual SVRG mode needs eta and m")
        self.rng = ensure_rng(self.rng)

    def parameters(self, sigma: float, beta: float) -> tuple[float, int]:
        if self.mode == "manual":
            return float(self.eta), int(self.m)
        return auto_parameters(sigma, beta)


def auto_parameters(sigma: float, beta: float) -> tuple[float, int]:
    if not (sigma > 0 and beta >= sigma):
        raise InputError(f"need 0 < sigma <= beta, got sigma={sigma}, beta={beta}")
    eta = sigma / (7.0 * beta * beta)
    m_real = 49.0 * beta * beta / (2.0 * sigma * sigma)
    # relative slack so an integral value is not pushed up by rounding
    m = int(math.ceil(m_real * (1.0 - 1e-12)))
    if m > M_CAP:
        log.warning("SVRG inner length %d exceeds cap %d; truncating", m, M_CAP)
        m = M_CAP
    return eta, max(m, 1)


def _sample(rng: SeededRng, count: int, n: int, cdf: np.ndarray | None) -> np.ndarray:
    u = rng.uniform(count)
    if cdf is None:
        idx = (u * n).astype(np.int64)
    else:
        idx = np.searchsorted(cdf, u * cdf[-1], side="right").astype(np.int64)
    np.minimum(idx, n - 1, out=idx)
    return idx


class _Components:
    """Backend adapter for the compiled inner loops."""

    def __init__(self, back, lam: float):
        self.lam = lam
        self.back = back
        if isinstance(back, DataMatrix):
            c = back.csr
            self.args = (c.indptr.astype(np.int64), c.indices.astype(np.int64), c.data)
            self.kernel = _kernels.svrg_rank_one_steps
            self.cdf = None
        else:
            rows, cols, vals, ptr = back.flat_coo()
            self.args = (rows, cols, vals, ptr, back.shifted)
            self.kernel = _kernels.svrg_ensemble_steps
            w = back.weights
            self.cdf = None if np.all(w == w[0]) else np.cumsum(w)
        self.n = back.n

    def run(self, eta, y, mu, idx, ysum):
        self.kernel(*self.args, self.lam, eta, y, mu, idx, ysum)


def _svrg(prob: QuadraticProblem, cfg: SvrgConfig, z0, tol, callback) -> SolveResult:
    if not prob.sigma > 0:
        raise InputError("SVRG needs sigma > 0")
    comp = _Components(prob.operator.base.backend, prob.lam)
    eta, m = cfg.parameters(prob.sigma, prob.beta)
    z_tilde = np.zeros(prob.d) if z0 is None else np.array(z0, dtype=float)
    mu = prob.gradient(z_tilde)
    gnorm = float(np.linalg.norm(mu))
    full = 1
    r0 = gnorm / prob.sigma
    if cfg.T is not None:
        T = int(cfg.T)
    elif tol is not None:
        # expected halving per epoch; pad for Markov-style restarts
        need = max(2.0 * math.log2(max(r0, tol) / tol), 1.0)
        T = int(math.ceil(2 * need + math.log2(1.0 / cfg.p_fail))) + 10
    else:
        raise InputError("SVRG needs an epoch count T or a tolerance")
    blowup = 1e6 * (np.linalg.norm(z_tilde) + r0 + 1.0)
    target = None if tol is None else prob.sigma * tol
    comps = 0
    epochs = 0
    if target is not None and gnorm <= target:
        return SolveResult(z_tilde, True, gnorm, 0, full, 0)
    for s in range(1, T + 1):
        y = np.zeros(prob.d)
        ysum = np.zeros(prob.d)
        done = 0
        while done < m:
            k = min(_CHUNK, m - done)
            idx = _sample(cfg.rng, k, comp.n, comp.cdf)
            comp.run(eta, y, mu, idx, ysum)
            done += k
            if not np.isfinite(y).all() or np.linalg.norm(y) > blowup:
                raise StepSizeError(
                    f"SVRG diverged in epoch {s} (eta={eta:.3e}); reduce eta in manual mode"
                )
        comps += m
        epochs = s
        z_tilde = z_tilde + ysum / m
        if callback is not None:
            callback(s, z_tilde)
        mu = prob.gradient(z_tilde)
        full += 1
        gnorm = float(np.linalg.norm(mu))
        if np.linalg.norm(z_tilde) > blowup:
            raise StepSizeError(f"SVRG diverged in epoch {s} (eta={eta:.3e})")
        if target is not None and gnorm <= target:
            return SolveResult(z_tilde, True, gnorm, epochs, full, comps)
    return SolveResult(z_tilde, target is None, gnorm, epochs, full, comps)


def svrg_solve(prob: QuadraticProblem, cfg: SvrgConfig, z0=None, tol: float | None = None,
               callback: Callable[[int, np.ndarray], None] | None = None) -> SolveResult:
    """SVRG over the rank-one components of a :class:`DataMatrix`.

    Each epoch takes the full gradient at the anchor, runs ``m`` variance
    reduced steps with uniformly sampled rows and replaces the anchor by the
    average of the ``m`` iterates produced. With ``tol`` set the solver stops
    as soon as the anchor carries the gradient certificate and raises
    :class:`ToleranceError` if the epoch cap is hit first; without ``tol``
    it runs exactly ``cfg.T`` epochs. ``z0=None`` is the cold start from 0.
    ``callback(s, z_tilde_s)`` sees every epoch's anchor.
    """
    if not isinstance(prob.operator.base.backend, DataMatrix):
        raise InputError("svrg_solve expects a DataMatrix backend; use svrg_dense_solve")
    res = _svrg(prob, cfg, z0, tol, callback)
    if not res.converged:
        raise ToleranceError(
            f"SVRG hit its epoch cap ({res.epochs}) with gradient norm {res.grad_norm:.3e} "
            f"> {prob.sigma * tol:.3e}"
        )
    return res


def svrg_dense_solve(prob: QuadraticProblem, cfg: SvrgConfig, z0=None, tol: float | None = None,
                     callback: Callable[[int, np.ndarray], None] | None = None) -> SolveResult:
    """SVRG over the components of a :class:`DenseEnsemble`, sampled by weight.

    Uniform weights reuse the uniform sampling map of :func:`svrg_solve`, so a
    rank-one ensemble and its data matrix see the same index sequence for the
    same seed.
    """
    if not isinstance(prob.operator.base.backend, DenseEnsemble):
        raise InputError("svrg_dense_solve expects a DenseEnsemble backend")
    res = _svrg(prob, cfg, z0, tol, callback)
    if not res.converged:
        raise ToleranceError(
            f"ensemble SVRG hit its epoch cap ({res.epochs}) with gradient norm "
            f"{res.grad_norm:.3e}"
        )
    return res


def _svrg_any(prob, cfg, z0, tol, callback=None):
    if isinstance(prob.operator.base.backend, DenseEnsemble):
        return svrg_dense_solve(prob, cfg, z0, tol, callback)
    return svrg_solve(prob, cfg, z0, tol, callback)


@dataclass
class CatalystConfig:
    """Proximal augmentation ``kappa_cat``, outer cap and inner SVRG template.

    ``kappa_cat=None`` picks ``beta * sqrt(T_g / T_G)`` with the per-component
    to full-gradient cost ratio taken as ``1/n``.
    """

    inner: SvrgConfig = field(default_factory=SvrgConfig)
    kappa_cat: float | None = None
    outer_iterations: int = 1000

    def kappa_for(self, prob: QuadraticProblem) -> float:
        if self.kappa_cat is not None:
            if self.kappa_cat < 0:
                raise InputError("kappa_cat must be non-negative")
            return float(self.kappa_cat)
        n = prob.operator.base.n
        return prob.beta * math.sqrt(1.0 / n)


def catalyst_solve(prob: QuadraticProblem, cfg: CatalystConfig, z0=None,
                   tol: float = 1e-10) -> SolveResult:
    """Accelerated proximal point loop around SVRG.

    Outer step ``k`` approximately minimizes ``F(z) + kappa/2 ||z - y_{k-1}||^2``
    (a quadratic of the same family with shift ``lam + kappa``), warm started
    at the previous outer iterate, then extrapolates
    ``y_k = x_k + (1 - sqrt q)/(1 + sqrt q) (x_k - x_{k-1})`` with
    ``q = sigma / (sigma + kappa)``. Inner accuracy tightens geometrically at
    rate ``1 - 0.9 sqrt q`` down to a floor of ``q tol / 2`` (``tol`` itself
    when ``kappa = 0``, which makes one outer step a plain SVRG solve).
    """
    if not prob.sigma > 0:
        raise InputError("catalyst_solve needs sigma > 0")
    kappa = cfg.kappa_for(prob)
    K = int(cfg.outer_iterations)
    if K < 1:
        raise InputError("need at least one outer iteration")
    q = prob.sigma / (prob.sigma + kappa)
    momentum = (1.0 - math.sqrt(q)) / (1.0 + math.sqrt(q))
    rho = 0.9 * math.sqrt(q)
    x_prev = np.zeros(prob.d) if z0 is None else np.array(z0, dtype=float)
    g0 = prob.gradient(x_prev)
    full, comps, epochs = 1, 0, 0
    r0 = float(np.linalg.norm(g0)) / prob.sigma
    if r0 <= tol:
        return SolveResult(x_prev, True, r0 * prob.sigma, 0, full, 0, 0)
    # inner error e contributes up to (beta + kappa) e to grad F, hence the q factor
    floor = 0.5 * q * tol
    y = x_prev
    for k in range(1, K + 1):
        inner = prob.augmented(kappa, y) if kappa > 0 else prob
        inner_tol = tol if kappa == 0 else max(floor, r0 * (1.0 - rho) ** k / 3.0)
        res = _svrg_any(inner, cfg.inner, x_prev, inner_tol)
        full += res.full_grads
        comps += res.component_grads
        epochs += res.epochs
        x = res.z
        if kappa == 0:
            g = res.grad_norm
        else:
            g = float(np.linalg.norm(prob.gradient(x)))
            full += 1
        if g <= prob.sigma * tol:
            return SolveResult(x, True, g, epochs, full, comps, k)
        y = x + momentum * (x - x_prev)
        x_prev = x
    raise ToleranceError(f"catalyst hit {K} outer iterations with gradient norm {g:.3e}")
