"""Iterative hard thresholding with local linearization, and projected gradient.

Both solvers start from ``x = 0`` and alternate a gradient-type step with the
projection of :mod:`nliht.constraints`:

* :func:`niht_solve` for observations ``y = Phi(x) + e``::

      x <- P_A(x + mu * J(x)^T (y - Phi(x)))

  where ``J(x)`` is the Jacobian of ``Phi`` at the current iterate;
* :func:`pgd_solve` for a general differentiable objective ``f``::

      x <- P_A(x - (mu / 2) * grad f(x))

For ``f(x) = ||y - G x||^2`` the two iterations coincide.
"""
import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._util import as_signal
from .errors import Diverged, InfeasibleStep, InvalidInput

__all__ = [
    "SolverConfig",
    "StopReason",
    "IterationRecord",
    "RecoveryResult",
    "Objective",
    "StepInterval",
    "least_squares_objective",
    "niht_solve",
    "pgd_solve",
    "admissible_step_niht",
    "admissible_step_pgd",
    "pgd_contraction",
]


@dataclass(frozen=True)
class SolverConfig:
    mu: float
    max_iterations: int = 1000
    residual_tolerance: float = 1e-8
    iterate_change_tolerance: float = 1e-10
    record_trace: bool = True

    def __post_init__(self):
        if isinstance(self.mu, str) or not (np.isfinite(self.mu) and self.mu > 0):
            raise InvalidInput(f"step size mu must be a positive number, got {self.mu!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidInput(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if self.residual_tolerance < 0 or self.iterate_change_tolerance < 0:
            raise InvalidInput("tolerances must be non-negative")


class StopReason(str, enum.Enum):
    RESIDUAL_TOL = "ResidualTol"
    ITERATE_TOL = "IterateTol"
    MAX_ITER = "MaxIter"


@dataclass
class IterationRecord:
    """State of one iterate ``x^n``.

    ``value`` is ``||y - Phi(x^n)||`` for :func:`niht_solve` and ``f(x^n)`` for
    :func:`pgd_solve`. ``change`` is ``||x^n - x^(n-1)||`` (NaN for ``n = 0``).
    The oracle fields are filled only when a ground truth was supplied.
    """

    iteration: int
    value: float
    change: float
    component: object
    iterate: np.ndarray
    e_A_norm: Optional[float] = None
    truth_distance: Optional[float] = None


@dataclass
class RecoveryResult:
    estimate: np.ndarray
    iterations_run: int
    stop_reason: StopReason
    final_value: float
    trace: Optional[list] = None
    mu: float = float("nan")

    def iterates(self):
        """Stacked iterates ``x^0 .. x^K`` (requires a recorded trace)."""
        if self.trace is None:
            raise ValueError("trace was not recorded")
        return np.array([rec.iterate for rec in self.trace])


@dataclass(frozen=True)
class Objective:
    """A non-negative objective with its gradient."""

    evaluate: Callable
    gradient: Callable


def least_squares_objective(model, y):
    """``f(x) = ||y - Phi(x)||^2`` with ``grad f(x) = -2 J(x)^T (y - Phi(x))``.

    ``model`` may be a :class:`~nliht.operators.MeasurementModel` or a plain
    gain matrix.
    """
    y = as_signal(y, "y")
    if isinstance(model, np.ndarray):
        G = model

        def evaluate(x):
            r = y - G @ x
            return float(r @ r)

        def gradient(x):
            return -2.0 * (G.T @ (y - G @ x))

        return Objective(evaluate, gradient)

    def evaluate(x):
        r = y - model.forward(x)
        return float(r @ r)

    def gradient(x):
        return -2.0 * model.jacobian_adjoint_apply(x, y - model.forward(x))

    return Objective(evaluate, gradient)


def _check_finite(x_new, x_old, iteration, what):
    if not np.all(np.isfinite(x_new)):
        raise Diverged(
            f"{what} became non-finite at iteration {iteration}", iteration, x_old.copy()
        )


def niht_solve(y, model, A, cfg, ground_truth=None):
    """Recover a signal in ``A`` from ``y = Phi(x) + e``.

    Iterates ``x <- P_A(x + mu J(x)^T (y - Phi(x)))`` from ``x = 0`` and stops at
    the first of: residual ``||y - Phi(x)|| <= residual_tolerance``, step
    ``||x_new - x|| <= iterate_change_tolerance``, or ``max_iterations`` updates.

    Parameters
    ----------
    y : array_like, shape (m,)
    model : MeasurementModel
    A : constraint set
    cfg : SolverConfig
    ground_truth : array_like, optional
        When given, every trace record also carries ``||e_A^n||`` with
        ``e_A^n = y - Phi(x^n) - J(x^n)(x_A - x^n)`` and ``||x_A - x^n||``,
        where ``x_A = P_A(ground_truth)``. These never influence the iterates.

    Returns
    -------
    RecoveryResult

    Raises
    ------
    Diverged
        If an iterate or residual becomes non-finite.
    """
    m, n = model.shape
    y = as_signal(y, "y", m)
    if A.n != n:
        raise InvalidInput(f"constraint set dimension {A.n} does not match model input {n}")
    x_A = None
    if ground_truth is not None:
        x_A = A.project(as_signal(ground_truth, "ground_truth", n))

    x = np.zeros(n)
    component = A.project_with_id(x)[1]
    trace = [] if cfg.record_trace else None
    change = math.nan
    stop = StopReason.MAX_ITER
    iterations = 0

    while True:
        r = y - model.forward(x)
        res = float(np.linalg.norm(r))
        if not math.isfinite(res):
            raise Diverged(f"residual became non-finite at iteration {iterations}", iterations, x)
        if trace is not None:
            rec = IterationRecord(iterations, res, change, component, x.copy())
            if x_A is not None:
                e_A = r - model.jacobian_apply(x, x_A - x)
                rec.e_A_norm = float(np.linalg.norm(e_A))
                rec.truth_distance = float(np.linalg.norm(x_A - x))
            trace.append(rec)
        if res <= cfg.residual_tolerance:
            stop = StopReason.RESIDUAL_TOL
            break
        if change <= cfg.iterate_change_tolerance:
            stop = StopReason.ITERATE_TOL
            break
        if iterations >= cfg.max_iterations:
            break
        v = x + cfg.mu * model.jacobian_adjoint_apply(x, r)
        _check_finite(v, x, iterations + 1, "iterate")
        x_new, component = A.project_with_id(v)
        change = float(np.linalg.norm(x_new - x))
        x = x_new
        iterations += 1

    return RecoveryResult(x, iterations, stop, res, trace, cfg.mu)


def pgd_solve(obj, A, cfg, ground_truth=None):
    """Minimize ``obj`` over ``A`` by projected gradient descent.

    Iterates ``x <- P_A(x - (mu / 2) grad f(x))`` from ``x = 0``. Stopping
    rules mirror :func:`niht_solve` with the objective value ``f(x)`` taking
    the place of the residual norm. ``final_value`` always holds ``f`` at the
    returned estimate, trace or no trace.
    """
    n = A.n
    x_opt = None
    if ground_truth is not None:
        x_opt = as_signal(ground_truth, "ground_truth", n)
    x = np.zeros(n)
    component = A.project_with_id(x)[1]
    trace = [] if cfg.record_trace else None
    change = math.nan
    stop = StopReason.MAX_ITER
    iterations = 0

    while True:
        f = float(obj.evaluate(x))
        if not math.isfinite(f):
            raise Diverged(f"objective became non-finite at iteration {iterations}", iterations, x)
        if trace is not None:
            rec = IterationRecord(iterations, f, change, component, x.copy())
            if x_opt is not None:
                rec.truth_distance = float(np.linalg.norm(x_opt - x))
            trace.append(rec)
        if f <= cfg.residual_tolerance:
            stop = StopReason.RESIDUAL_TOL
            break
        if change <= cfg.iterate_change_tolerance:
            stop = StopReason.ITERATE_TOL
            break
        if iterations >= cfg.max_iterations:
            break
        grad = np.asarray(obj.gradient(x), dtype=float)
        if grad.shape != (n,):
            raise InvalidInput(f"gradient has shape {grad.shape}, expected ({n},)")
        _check_finite(grad, x, iterations + 1, "gradient")
        x_new, component = A.project_with_id(x - (cfg.mu / 2) * grad)
        change = float(np.linalg.norm(x_new - x))
        x = x_new
        iterations += 1

    return RecoveryResult(x, iterations, stop, f, trace, cfg.mu)


@dataclass(frozen=True)
class StepInterval:
    """Interval of admissible step sizes ``mu``."""

    lower: float
    upper: float
    lower_closed: bool
    upper_closed: bool = True
    condition: str = field(default="", compare=False)

    def __contains__(self, mu):
        above = mu >= self.lower if self.lower_closed else mu > self.lower
        below = mu <= self.upper if self.upper_closed else mu < self.upper
        return above and below

    @property
    def largest(self):
        return self.upper

    def __str__(self):
        lo = "[" if self.lower_closed else "("
        hi = "]" if self.upper_closed else ")"
        return f"{lo}{self.lower:.6g}, {self.upper:.6g}{hi}"


def _check_constants(alpha, beta):
    if not (alpha > 0 and beta > 0):
        raise InvalidInput(f"RIP constants must be positive, got alpha={alpha}, beta={beta}")
    if beta < alpha:
        raise InvalidInput(f"need beta >= alpha, got alpha={alpha}, beta={beta}")


NIHT_CONDITION = "β ≤ 1/μ < 1.5α − 4C"
PGD_CONDITION = "β ≤ 1/μ ≤ (4/3)α"


def admissible_step_niht(alpha, beta, C=0.0):
    """Step sizes with ``beta <= 1/mu < 1.5 alpha - 4 C``.

    ``C = 0`` gives the noise-free linearization condition
    ``beta <= 1/mu < 1.5 alpha``.

    Returns
    -------
    StepInterval
        ``(1 / (1.5 alpha - 4 C), 1 / beta]``.

    Raises
    ------
    InfeasibleStep
        If ``beta >= 1.5 alpha - 4 C``.
    """
    _check_constants(alpha, beta)
    if C < 0:
        raise InvalidInput(f"linearization constant must be >= 0, got {C}")
    limit = 1.5 * alpha - 4 * C
    if not beta < limit:
        raise InfeasibleStep(
            f"no step size satisfies {NIHT_CONDITION}: "
            f"beta={beta:.6g} but 1.5*alpha-4*C={limit:.6g}"
        )
    return StepInterval(1.0 / limit, 1.0 / beta, False, True, NIHT_CONDITION)


def admissible_step_pgd(alpha, beta):
    """Step sizes with ``beta <= 1/mu <= (4/3) alpha``, i.e. ``[3/(4 alpha), 1/beta]``.

    At the lower end ``mu = 3/(4 alpha)`` the contraction factor
    ``4 (1 - mu alpha)`` equals one; see :func:`pgd_contraction`.
    """
    _check_constants(alpha, beta)
    if not beta <= 4.0 * alpha / 3.0:
        raise InfeasibleStep(
            f"no step size satisfies {PGD_CONDITION}: "
            f"beta={beta:.6g} but (4/3)*alpha={4 * alpha / 3:.6g}"
        )
    return StepInterval(3.0 / (4.0 * alpha), 1.0 / beta, True, True, PGD_CONDITION)


def pgd_contraction(mu, alpha):
    """``c = 4 (1 - mu alpha)``; warns when the geometric bound degenerates."""
    c = 4.0 * (1.0 - mu * alpha)
    if c >= 1 - 1e-9:
        warnings.warn(
            f"contraction factor 4(1 - mu*alpha) = {c:.6g} is not below one; "
            "the iteration-count bound is vacuous",
            RuntimeWarning,
            stacklevel=2,
        )
    return c
