"""Shrinking shift-and-invert drivers for the leading eigenvector.

All variants share one loop. Starting from ``lam_0 = 1 + gap`` the driver
runs a short power method on ``(lam_s I - X)^{-1}``, turns the Rayleigh
quotient into an estimate ``Delta_s`` of ``lam_s - lambda_1`` and moves the
shift down by ``Delta_s / 2``. Once ``Delta_s`` falls below the target gap
the shift sits within a constant factor of the gap above ``lambda_1``, so a
final power phase on the well-conditioned inverse finishes the job. The
inverse products come from an :class:`InnerSolver`.

* :func:`shrink_exact` - inverse products to solver precision, crude phases
  of accuracy 1/2;
* :func:`shrink_inexact` - inverse products as convex minimizations to a
  distance tolerance ``eps_tilde``, crude phases of accuracy 1/8;
* :func:`gapfree_eigenvalue` - the same loop driven by ``epsilon`` instead
  of a gap estimate, with a span-type final phase;
* :func:`search_delta_hat` - halving search for a usable gap estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningError, GuardViolation, InputError, NoGapError, SingularOperatorError, ToleranceError,
)
from .linalg import (
    CovarianceOperator, DataMatrix, DenseEnsemble, SeededRng, ShiftedOperator, as_operator,
    ensure_rng, random_unit_vector,
)
from .power import pm_iterations
from .quad import (
    CatalystConfig, QuadraticProblem, SolveResult, SvrgConfig, catalyst_solve, exact_solve,
    svrg_dense_solve, svrg_solve,
)

INNER_KINDS = ("exact", "svrg", "catalyst")
EXACT_TOL = 1e-12
SUBSAMPLE_C = 8.0


def gap_estimate_delta(M_inv_quadform: float, eps: float) -> float:
    """``(1 - eps) / (w^T M^{-1} w)``, which lies in ``[(1-eps)(lam - lambda_1), lam - lambda_1]``
    when ``w`` carries a Rayleigh quotient of at least ``(1-eps) lambda_1(M^{-1})``."""
    if not M_inv_quadform > 0:
        raise ConditioningError("non-positive inverse quadratic form: shift is not above lambda_1")
    if not 0.0 <= eps <= 1.0:
        raise InputError(f"eps must lie in [0, 1], got {eps}")
    return (1.0 - eps) / M_inv_quadform


def inverse_condition_bound(lam: float, lambda1: float, delta: float) -> float:
    """``lambda_1(M^{-1}) / lambda_2(M^{-1}) = (lam - lambda_1 + delta) / delta``."""
    if not lam > lambda1:
        raise InputError("shift must exceed lambda_1")
    if not delta > 0:
        raise InputError("eigengap must be positive")
    return (lam - lambda1 + delta) / delta


def gamma(lambda1_M: float, lambdad_M: float, t: int) -> tuple[float, float]:
    """Noise amplification factors ``(Gamma, Gamma_hat)`` of ``t`` perturbed power steps.

    ``Gamma_hat = sum_{k<t} lambda_1^k`` bounds the unnormalized drift;
    ``Gamma = 2 Gamma_hat / lambda_d^t`` bounds the drift of the normalized
    iterates.
    """
    if not lambdad_M > 0:
        raise InputError("lambda_d must be positive")
    if lambda1_M < lambdad_M:
        raise InputError("need lambda_1 >= lambda_d")
    if t < 0:
        raise InputError("t must be non-negative")
    if abs(lambda1_M - 1.0) < 1e-12:
        g_hat = float(t)
    else:
        g_hat = (lambda1_M ** t - 1.0) / (lambda1_M - 1.0)
    return 2.0 * g_hat / lambdad_M ** t, g_hat


def loop_bound(gap: float) -> int:
    """``ceil(log_{4/3}((1 + gap) / gap))``, the loop count guaranteed for a valid gap."""
    return int(math.ceil(math.log((1.0 + gap) / gap) / math.log(4.0 / 3.0)))


def theoretical_eps_tilde(delta_hat: float, epsilon: float, m1: int, m2: int) -> float:
    a = math.log(delta_hat / 8.0)
    first = math.exp(math.log(1.0 / 16.0) + (m1 + 1) * a)
    second = math.exp(math.log(epsilon / 4.0) + (m2 + 1) * a)
    return min(first, second)


@dataclass(frozen=True)
class GapEstimate:
    """``delta_hat`` with the bracket ``c1 delta <= delta_hat <= c2 delta`` it claims."""

    delta_hat: float
    relation: tuple[float, float] = (0.5, 0.75)
    source: str = "user"
    trials: tuple = ()
    oracle_calls: int = 0

    def __post_init__(self):
        if not 0.0 < self.delta_hat <= 1.0:
            raise InputError(f"delta_hat must lie in (0, 1], got {self.delta_hat}")
        if self.source not in ("user", "search"):
            raise InputError(f"unknown gap source {self.source!r}")


@dataclass(frozen=True)
class ScheduleParams:
    """Phase lengths and the inner tolerance ``eps_tilde``.

    ``theoretical`` mode uses the worst-case ``eps_tilde``, which underflows
    or falls below double precision for realistic ``m1``; ``practical`` mode
    uses ``practical_tol`` as the inner distance tolerance.
    """

    m1: int
    m2: int
    eps_tilde: float
    mode: str = "practical"
    practical_tol: float = 1e-10
    final: str = "accurate"

    @classmethod
    def build(cls, d: int, delta_hat: float, epsilon: float, p: float, mode: str = "practical",
              practical_tol: float = 1e-10, m1: int | None = None, m2: int | None = None,
              final: str = "accurate") -> "ScheduleParams":
        if mode not in ("theoretical", "practical"):
            raise InputError(f"unknown schedule mode {mode!r}")
        if not 0.0 < epsilon < 1.0:
            raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
        if m1 is None:
            m1 = pm_iterations("crude", d, p, 1.0 / 8.0)
        if m2 is None:
            if final == "accurate":
                m2 = pm_iterations("accurate", d, p, epsilon / 2.0, kappa=3.0)
            elif final == "span":
                m2 = pm_iterations("span", d, p, 0.25, epsilon2=epsilon / 2.0)
            else:
                raise InputError(f"unknown final phase {final!r}")
        if mode == "theoretical":
            tol = theoretical_eps_tilde(delta_hat, epsilon, m1, m2)
        else:
            if not practical_tol > 0:
                raise InputError("practical tolerance must be positive")
            tol = practical_tol
        return cls(int(m1), int(m2), tol, mode, practical_tol, final)


@dataclass
class ShrinkState:
    """Shift trajectory: ``lambdas[0] = lam_0`` and ``lambdas[s] = lam_s``, ``deltas[s-1] = Delta_s``."""

    lambdas: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    sigmas: list = field(default_factory=list)
    lambda_f: float | None = None
    oracle_calls: int = 0

    @property
    def s(self) -> int:
        return len(self.deltas)

    @property
    def history(self) -> list[tuple[float, float]]:
        return list(zip(self.lambdas[1:], self.deltas))


@dataclass
class InnerStats:
    calls: int = 0
    epochs: int = 0
    full_grads: int = 0
    component_grads: int = 0
    outer_iterations: int = 0

    def add(self, r: SolveResult):
        self.calls += 1
        self.epochs += r.epochs
        self.full_grads += r.full_grads
        self.component_grads += r.component_grads
        self.outer_iterations += r.outer_iterations

    def passes(self, n: int) -> float:
        return self.full_grads + self.component_grads / n


@dataclass
class InnerSolver:
    """Inverse-product oracle: approximately ``(lam I - X)^{-1} w`` to distance ``tol``.

    ``sigma`` passed to :meth:`solve` must be a lower bound on
    ``lam - lambda_1``; it sets the certificate and the SVRG step size.
    ``relative=True`` scales the tolerance by ``1/sigma`` (the size of the
    solution), which keeps exact solves feasible for tiny shifts.
    """

    kind: str = "exact"
    rng: SeededRng | int | None = None
    svrg_mode: str = "auto"
    eta: float | None = None
    m: int | None = None
    kappa_cat: float | None = None
    cold_start: bool = False
    relative: bool = False
    stats: InnerStats = field(default_factory=InnerStats)

    def __post_init__(self):
        if self.kind not in INNER_KINDS:
            raise InputError(f"unknown inner solver {self.kind!r}")
        self.rng = ensure_rng(self.rng)
        self._svrg = None
        if self.kind != "exact":
            self._svrg = SvrgConfig(rng=self.rng, mode=self.svrg_mode, eta=self.eta, m=self.m)

    def solve(self, op: ShiftedOperator, w, sigma: float, tol: float, z0=None) -> SolveResult:
        if self.relative:
            tol = tol / min(sigma, 1.0)
        prob = QuadraticProblem(op, w, sigma)
        z0 = None if self.cold_start else z0
        if self.kind == "exact":
            res = exact_solve(prob, tol, z0)
        elif self.kind == "svrg":
            if isinstance(op.base.backend, DenseEnsemble):
                res = svrg_dense_solve(prob, self._svrg, z0, tol)
            else:
                res = svrg_solve(prob, self._svrg, z0, tol)
        else:
            cfg = CatalystConfig(inner=self._svrg, kappa_cat=self.kappa_cat)
            res = catalyst_solve(prob, cfg, z0, tol)
        self.stats.add(res)
        return res


@dataclass
class EigResult:
    w_f: np.ndarray
    rayleigh: float
    lambda_f: float
    mode: str
    state: ShrinkState
    schedule: ScheduleParams
    inner: str
    inner_stats: InnerStats
    p: float
    epsilon: float
    gap: float
    phase_lengths: list = field(default_factory=list)
    subsample_size: int | None = None
    data_n: int | None = None

    @property
    def loops(self) -> int:
        return self.state.s

    @property
    def oracle_calls(self) -> int:
        return self.state.oracle_calls


def _eigen_upper_bound(base: CovarianceOperator) -> float:
    back = base.backend
    if isinstance(back, DataMatrix):
        return float(back.row_norms_sq.max())
    return back.norm_bound + (1.0 if back.shifted else 0.0)


def _check_normalized(base: CovarianceOperator):
    if _eigen_upper_bound(base) > 1.0 + 1e-12:
        raise InputError(
            "covariance is not normalized to lambda_1 <= 1; rescale the data "
            "(normalize_dataset) before running the driver"
        )


def _power_phase(base, lam, w0, steps, sigma, tol, solver: InnerSolver, state: ShrinkState,
                 phase: str):
    """``steps`` normalized inexact power steps on ``(lam I - X)^{-1}`` from ``w0``.

    Each solve warm starts from the previous solution rescaled onto the new
    input direction. Returns the last unit iterate and last raw solution.
    """
    op = ShiftedOperator(base, lam, known_gap_lower=sigma)
    w = w0
    z = None
    q_prev = None
    for t in range(1, steps + 1):
        z0 = None if q_prev is None else q_prev * w
        try:
            res = solver.solve(op, w, sigma, tol, z0)
        except ToleranceError as exc:
            raise type(exc)(f"{phase}, power step {t} (shift {lam:.12g}): {exc}") from exc
        state.oracle_calls += 1
        z = res.z
        q_prev = float(w @ z)
        nz = np.linalg.norm(z)
        if not nz > 0:
            raise SingularOperatorError(f"{phase}: inner solve returned zero at step {t}")
        w = z / nz
    return w, q_prev


def _shrink_loop(base, gap, m1, sigma0, tol, eps_tilde, solver, w0, state,
                 guard_extra=2):
    """Repeat-until loop; returns the final shift and the sigma lower bound there."""
    guard = loop_bound(gap) + guard_extra
    lam = 1.0 + gap
    sigma = sigma0
    state.lambdas.append(lam)
    state.sigmas.append(sigma)
    while True:
        if state.s >= guard:
            raise GuardViolation(
                f"shrinking loop exceeded {guard} iterations (gap target {gap:.6g}, "
                f"shift {lam:.12g}); the gap estimate or the inner solver is unreliable"
            )
        s = state.s + 1
        w_s, _ = _power_phase(base, lam, w0, m1, sigma, tol, solver, state, f"loop {s}")
        op = ShiftedOperator(base, lam, known_gap_lower=sigma)
        res = solver.solve(op, w_s, sigma, tol, None)
        state.oracle_calls += 1
        quad = float(w_s @ res.z) - eps_tilde
        delta = 0.5 / quad if quad > 0 else math.inf
        if not math.isfinite(delta):
            raise ConditioningError(f"loop {s}: inverse quadratic form below tolerance")
        lam = lam - delta / 2.0
        sigma = max(delta / 2.0, sigma - delta / 2.0)
        state.deltas.append(delta)
        state.lambdas.append(lam)
        state.sigmas.append(sigma)
        if delta <= gap:
            state.lambda_f = lam
            return lam, sigma


def _run(X, gap, epsilon, p, rng, solver: InnerSolver, schedule: ScheduleParams, mode: str,
         w0=None, skip_final=False, eps_tilde=None) -> EigResult:
    base = as_operator(X)
    _check_normalized(base)
    rng = ensure_rng(rng)
    if w0 is None:
        w0 = random_unit_vector(rng, base.d)
    state = ShrinkState()
    tol = schedule.eps_tilde
    et = schedule.eps_tilde if eps_tilde is None else eps_tilde
    lam_f, sigma = _shrink_loop(base, gap, schedule.m1, gap, tol, et, solver, w0, state)
    phases = [schedule.m1] * state.s
    if skip_final:
        w_f = w0
    else:
        w_f, _ = _power_phase(base, lam_f, w0, schedule.m2, sigma, tol, solver, state, "final phase")
        phases.append(schedule.m2)
    w_f = w_f / np.linalg.norm(w_f)
    ray = float(w_f @ base.matvec(w_f))
    return EigResult(w_f, ray, lam_f, mode, state, schedule, solver.kind, solver.stats, p,
                     epsilon, gap, phases, data_n=base.n)


def _validate(epsilon, p):
    if not 0.0 < epsilon < 1.0:
        raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < p < 1.0:
        raise InputError(f"p must lie in (0, 1), got {p}")


def _gap_value(delta_hat) -> float:
    g = delta_hat.delta_hat if isinstance(delta_hat, GapEstimate) else float(delta_hat)
    if not 0.0 < g <= 1.0:
        raise InputError(f"delta_hat must lie in (0, 1], got {g}")
    return g


def shrink_exact(X, delta_hat, epsilon: float, p: float, rng=None, m1: int | None = None,
                 m2: int | None = None, tol: float = EXACT_TOL, w0=None) -> EigResult:
    """Shrinking inverse power method with inverse products solved to ``tol``.

    Crude phases use ``T_crude(1/2, p)`` steps, ``Delta_s = 1/(2 w^T M^{-1} w)``
    and the final phase ``T_acc(4, epsilon, p)`` steps, since the final
    inverse has condition number at most 4. ``m1``/``m2`` override the
    phase lengths. ``tol`` is relative to the solution size ``1/sigma``,
    since an absolute ``1e-12`` is below rounding for small shifts.
    """
    _validate(epsilon, p)
    gap = _gap_value(delta_hat)
    base = as_operator(X)
    if m1 is None:
        m1 = pm_iterations("crude", base.d, p, 0.5)
    if m2 is None:
        m2 = pm_iterations("accurate", base.d, p, epsilon, kappa=4.0)
    sched = ScheduleParams(int(m1), int(m2), tol, "practical", tol)
    solver = InnerSolver("exact", relative=True)
    return _run(base, gap, epsilon, p, rng, solver, sched, "gap", w0=w0, eps_tilde=0.0)


def shrink_inexact(X, delta_hat, epsilon: float, p: float, inner: str | InnerSolver = "svrg",
                   schedule: ScheduleParams | None = None, rng=None, w0=None,
                   **schedule_kw) -> EigResult:
    """Leading eigenvector from convex minimizations solved to distance ``eps_tilde``.

    ``Delta_s = 1/(2 (w_s^T v_s - eps_tilde))`` where ``v_s`` approximates
    ``M_s^{-1} w_s``. Every power phase restarts from the same random unit
    vector. With ``inner='exact'`` and the same phase lengths the trajectory
    reproduces :func:`shrink_exact` up to the ``eps_tilde`` slack.
    """
    _validate(epsilon, p)
    gap = _gap_value(delta_hat)
    base = as_operator(X)
    rng = ensure_rng(rng)
    w_rng, s_rng = rng.spawn(2)
    if schedule is None:
        schedule = ScheduleParams.build(base.d, gap, epsilon, p, **schedule_kw)
    solver = inner if isinstance(inner, InnerSolver) else InnerSolver(inner, rng=s_rng)
    return _run(base, gap, epsilon, p, w_rng, solver, schedule, "gap", w0=w0)


def subsample_size(d: int, p: float, epsilon: float, C: float = SUBSAMPLE_C) -> int:
    """``ceil(C ln(2d/p) / epsilon^2)`` rows suffice for a spectral-norm ``epsilon`` proxy."""
    return int(math.ceil(C * math.log(2.0 * d / p) / (epsilon * epsilon)))


def gapfree_eigenvalue(X, epsilon: float, p: float, inner: str | InnerSolver = "svrg", rng=None,
                       subsample: bool = False, schedule: ScheduleParams | None = None,
                       w0=None, **schedule_kw) -> EigResult:
    """Unit vector with Rayleigh quotient at least ``lambda_1 - epsilon``, no gap assumed.

    The loop starts at ``1 + epsilon`` and stops once ``Delta_s <= epsilon``;
    the final phase uses the span schedule with thresholds ``1/4`` and
    ``epsilon/2``. With ``subsample=True`` the loop runs on ``n'`` rows drawn
    uniformly with replacement (skipped when ``n' >= n``). The reported
    Rayleigh quotient is always measured on the full data.
    """
    _validate(epsilon, p)
    base = as_operator(X)
    rng = ensure_rng(rng)
    w_rng, s_rng, sub_rng = rng.spawn(3)
    n_sub = None
    work = base
    if subsample:
        if not isinstance(base.backend, DataMatrix):
            raise InputError("subsampling needs a row-based data matrix")
        n_sub = subsample_size(base.d, p, epsilon)
        if n_sub < base.n:
            work = as_operator(base.backend.take(sub_rng.integers(base.n, n_sub)))
    if schedule is None:
        schedule_kw.setdefault("final", "span")
        schedule = ScheduleParams.build(base.d, epsilon, epsilon, p, **schedule_kw)
    solver = inner if isinstance(inner, InnerSolver) else InnerSolver(inner, rng=s_rng)
    res = _run(work, epsilon, epsilon, p, w_rng, solver, schedule, "gapfree", w0=w0)
    if work is not base:
        res.rayleigh = float(res.w_f @ base.matvec(res.w_f))
    res.subsample_size = n_sub
    res.data_n = base.n
    return res


def _top_pair(base, lam, w0, v0, steps, tol, sigma, solver, state):
    """Crude estimates of ``lam - lambda_1`` and ``lam - lambda_2`` at shift ``lam``.

    The first comes from a power phase started at ``w0``; the second from a
    phase started at the independent vector ``v0`` and kept orthogonal to the
    first direction. A second estimate that cannot be measured is ``nan``.
    """
    w1, _ = _power_phase(base, lam, w0, steps, sigma, tol, solver, state, "validation")
    op = ShiftedOperator(base, lam)
    q1 = float(w1 @ solver.solve(op, w1, sigma, tol).z)
    state.oracle_calls += 1
    if base.d == 1:
        return 1.0 / q1, math.inf

    def deflate(v):
        return v - (w1 @ v) * w1

    w = deflate(v0)
    if not np.linalg.norm(w) > 1e-8:
        return 1.0 / q1, math.nan
    w = w / np.linalg.norm(w)
    q2 = math.nan
    for _ in range(steps):
        z = deflate(solver.solve(op, w, sigma, tol).z)
        state.oracle_calls += 1
        q2 = float(w @ z)
        nz = np.linalg.norm(z)
        if not nz > 0:
            return 1.0 / q1, math.nan
        w = z / nz
    return 1.0 / q1, (1.0 / q2 if q2 > 0 else math.nan)


def search_delta_hat(X, epsilon: float, p: float, rng=None, inner: str = "exact",
                     floor: float = 2.0 ** -40, tol: float = 1e-10) -> GapEstimate:
    """Halving search ``delta_hat = 1, 1/2, 1/4, ...`` for a usable gap estimate.

    A candidate passes when its shrinking loop finishes within the guard, a
    crude re-estimate of ``lam_f - lambda_1`` sits inside the final-shift
    sandwich ``[delta_hat/4, 3 delta_hat/2]``, and the candidate is at most
    3/4 of the eigengap measured at ``lam_f`` by a deflated power phase.
    The first passing candidate is within ``(3/8, 3/4]`` of that measured gap.
    """
    _validate(epsilon, p)
    base = as_operator(X)
    _check_normalized(base)
    rng = ensure_rng(rng)
    w_rng, s_rng = rng.spawn(2)
    w0 = random_unit_vector(w_rng, base.d)
    v0 = random_unit_vector(w_rng, base.d)
    m1 = pm_iterations("crude", base.d, p, 1.0 / 8.0)
    m_val = pm_iterations("crude", base.d, p, 1.0 / 16.0)
    trials = []
    calls = 0
    k = 0
    while True:
        cand = 2.0 ** -k
        if cand < floor:
            raise NoGapError(
                f"no gap estimate validated down to {floor:.3g}; the spectrum looks gap-free, "
                "use the gap-free mode instead"
            )
        solver = InnerSolver(inner, rng=s_rng, relative=True)
        state = ShrinkState()
        verdict = "accepted"
        try:
            lam_f, sigma = _shrink_loop(base, cand, m1, cand, tol, 0.0, solver, w0, state)
            g1, g2 = _top_pair(base, lam_f, w0, v0, m_val, tol, sigma, solver, state)
            est = g2 - g1
            if not (cand / 4.0 <= g1 <= 1.5 * cand * 16.0 / 15.0):
                verdict = "sandwich"
            elif not cand <= 0.75 * est:
                verdict = "gap"
        except (GuardViolation, ToleranceError) as exc:
            verdict = type(exc).__name__
            est = float("nan")
        trials.append((cand, verdict, est))
        calls += solver.stats.calls
        if verdict == "accepted":
            return GapEstimate(cand, (0.375, 0.75), "search", tuple(trials), calls)
        k += 1
