"""Power iteration and its iteration-count schedules.

Three schedules are provided, all with natural logs:

* crude     ``ceil((1/eps) ln(18 d / (p^2 eps)))``   Rayleigh quotient >= (1-eps) lambda_1
* accurate  ``ceil((kappa/2) ln(9 d / (p^2 eps)))``  alignment (w^T u_1)^2 >= 1-eps
* span      ``ceil((1/(2 eps1)) ln(9 d / (p^2 eps2)))``  mass outside the top
  cluster ``{i : lambda_i > (1-eps1) lambda_1}`` at most eps2

each holding with probability ``1-p`` over a uniformly random start.
Operators are plain matvec callables so the same loop serves ``X``,
``lam I - X`` and approximate inverses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, SingularOperatorError

Matvec = Callable[[np.ndarray], np.ndarray]

MODES = ("crude", "accurate", "span")


def _unit_interval(name, x):
    if not 0.0 < x < 1.0:
        raise InputError(f"{name} must lie in (0, 1), got {x}")


def pm_iterations(mode: str, d: int, p: float, epsilon: float, kappa: float | None = None,
                  epsilon2: float | None = None) -> int:
    """Iteration count of the requested power-method schedule.

    In ``span`` mode ``epsilon`` is the relative eigenvalue threshold and
    ``epsilon2`` the allowed leftover mass.
    """
    if d < 1:
        raise InputError("dimension must be at least 1")
    _unit_interval("p", p)
    if mode == "crude":
        if not 0.0 < epsilon <= 1.0:
            raise InputError(f"epsilon must lie in (0, 1], got {epsilon}")
        t = (1.0 / epsilon) * math.log(18.0 * d / (p * p * epsilon))
    elif mode == "accurate":
        _unit_interval("epsilon", epsilon)
        if kappa is None or kappa < 1.0:
            raise InputError("accurate mode needs kappa >= 1")
        t = (kappa / 2.0) * math.log(9.0 * d / (p * p * epsilon))
    elif mode == "span":
        _unit_interval("epsilon", epsilon)
        if epsilon2 is None:
            raise InputError("span mode needs epsilon2")
        _unit_interval("epsilon2", epsilon2)
        t = (1.0 / (2.0 * epsilon)) * math.log(9.0 * d / (p * p * epsilon2))
    else:
        raise InputError(f"unknown schedule mode {mode!r}")
    return max(int(math.ceil(t)), 1)


@dataclass(frozen=True)
class PmSchedule:
    mode: str
    d: int
    p: float
    epsilon: float
    kappa: float | None = None
    epsilon2: float | None = None
    iterations: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "iterations",
            pm_iterations(self.mode, self.d, self.p, self.epsilon, self.kappa, self.epsilon2),
        )


def _matvec_of(M) -> Matvec:
    if callable(M):
        return M
    if hasattr(M, "matvec"):
        return M.matvec
    A = np.asarray(M, dtype=float)
    return lambda v: A @ v


def power_method(M, w0, t: int, callback: Callable[[int, np.ndarray], None] | None = None,
                 singular_tol: float = 1e-300) -> np.ndarray:
    """``t`` normalized power steps from ``w0``; returns ``M^t w0 / ||M^t w0||``.

    ``M`` may be a matvec callable, an object with ``matvec`` or an array.
    """
    if t < 0:
        raise InputError("iteration count must be non-negative")
    mv = _matvec_of(M)
    w = np.asarray(w0, dtype=float)
    w = w / np.linalg.norm(w)
    for k in range(1, t + 1):
        y = mv(w)
        nrm = np.linalg.norm(y)
        if not nrm > singular_tol:
            raise SingularOperatorError(f"matvec returned a zero vector at step {k}")
        w = y / nrm
        if callback is not None:
            callback(k, w)
    return w


def rayleigh_quotient(M, w) -> float:
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > 1e-9:
        raise InputError("rayleigh_quotient expects a unit vector")
    return float(w @ _matvec_of(M)(w))


def inexact_power_iterates(M, w, t: int, perturbations: Sequence[np.ndarray]):
    """Exact and perturbed power sequences side by side.

    Step ``k`` of the perturbed run is ``hat_w_k = M hat_w_{k-1} + e_k`` with
    ``e_k = perturbations[k-1]``; neither run is re-normalized before the
    product, matching the unnormalized recursion whose error growth is
    bounded by :func:`shrinkpca.driver.gamma`. Returns the four lists
    ``(hat_w_exact, w_exact, hat_w, w)`` of length ``t + 1``.
    """
    mv = _matvec_of(M)
    w = np.asarray(w, dtype=float)
    he, hw = [w.copy()], [w.copy()]
    for k in range(t):
        he.append(mv(he[-1]))
        hw.append(mv(hw[-1]) + perturbations[k])
    we = [h / np.linalg.norm(h) for h in he]
    ww = [h / np.linalg.norm(h) for h in hw]
    return he, we, hw, ww
