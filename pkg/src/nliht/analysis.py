"""Empirical constants and recovery-bound calculators.

Estimators
    :func:`estimate_rip`, :func:`estimate_C` and :func:`rscp_probe` sample
    random members of a constraint set and report the extremes of the
    relevant quotient. Sampling can only *see* part of the set, so these are
    inner estimates: ``alpha_hat >= alpha`` and ``beta_hat <= beta``.
    :func:`estimate_rip_exact` enumerates supports for small sparse problems.

Bound calculators
    :func:`theorem1_report`, :func:`corollary1_report`,
    :func:`theorem2_report` and :func:`lemma1_constants` evaluate the
    iteration counts and error bounds for the two solvers. Where the stated
    constant and the constant produced by its own derivation disagree, both
    are returned, tagged :attr:`Variant.AS_PRINTED` and
    :attr:`Variant.DERIVATION_CONSISTENT`.
"""
import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import orth

from ._util import as_signal
from .errors import InvalidInput
from .constraints import KSparse
from .solvers import pgd_contraction

__all__ = [
    "Variant",
    "RipEstimate",
    "CEstimate",
    "RscpEstimate",
    "BoundReport",
    "Lemma1Constants",
    "CounterexampleReport",
    "sample_triples",
    "rip_quotients",
    "estimate_rip",
    "estimate_rip_exact",
    "estimate_C",
    "lemma1_constants",
    "theorem1_report",
    "corollary1_report",
    "theorem2_report",
    "rscp_quotients",
    "rscp_probe",
    "convexity_counterexample",
]


class Variant(str, enum.Enum):
    AS_PRINTED = "AsPrinted"
    DERIVATION_CONSISTENT = "DerivationConsistent"


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# sampling


def sample_triples(A, trials, seed):
    """Draw ``trials`` triples ``(x1, x2, x_star)`` of members of ``A``.

    Pairs with ``x1 == x2`` are redrawn. Triples are drawn one at a time from a
    single stream, so a larger ``trials`` extends a smaller one.
    """
    if trials < 1:
        raise InvalidInput(f"trials must be >= 1, got {trials}")
    rng = _rng(seed)
    x1 = np.empty((trials, A.n))
    x2 = np.empty((trials, A.n))
    xs = np.empty((trials, A.n))
    for t in range(trials):
        while True:
            a, b = A.sample(rng), A.sample(rng)
            if np.any(a != b):
                break
        x1[t], x2[t], xs[t] = a, b, A.sample(rng)
    return x1, x2, xs


def rip_quotients(model, x1, x2, points):
    """``||J(p)(x1 - x2)||^2 / ||x1 - x2||^2`` row by row."""
    d = np.atleast_2d(x1) - np.atleast_2d(x2)
    den = np.einsum("ij,ij->i", d, d)
    if np.any(den == 0):
        raise InvalidInput("degenerate pair with x1 == x2")
    jd = model.jacobian_apply_rows(np.atleast_2d(points), d)
    return np.einsum("ij,ij->i", jd, jd) / den


# ---------------------------------------------------------------------------
# RIP and linearization constants


@dataclass
class RipEstimate:
    alpha_hat: float
    beta_hat: float
    trials: int
    constraint: str
    linearization_points_sampled: int
    method: str = "monte-carlo inner estimate (alpha_hat >= alpha, beta_hat <= beta)"
    quotients: Optional[np.ndarray] = field(default=None, repr=False)

    def to_record(self):
        return {
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "trials": self.trials,
            "linearization_points_sampled": self.linearization_points_sampled,
            "constraint": self.constraint,
            "method": self.method,
        }


def estimate_rip(model, A, trials=2000, seed=0, samples=None):
    """Monte-Carlo RIP constants of the Jacobian over differences in ``A``.

    For each sampled triple ``(x1, x2, p)`` of members of ``A`` the quotient
    ``||J(p)(x1 - x2)||^2 / ||x1 - x2||^2`` is formed; the estimate reports its
    minimum and maximum.

    Parameters
    ----------
    samples : tuple of arrays, optional
        Pre-drawn ``(x1, x2, points)``, e.g. to share pairs with
        :func:`rscp_probe`. Overrides ``trials`` and ``seed``.
    """
    if samples is None:
        samples = sample_triples(A, trials, seed)
    x1, x2, xs = samples
    q = rip_quotients(model, x1, x2, xs)
    return RipEstimate(
        float(q.min()), float(q.max()), len(q), repr(A), len(q), quotients=q
    )


def estimate_rip_exact(model, A, max_supports=10_000):
    """Exact restricted extremal eigenvalues for a linear model and ``KSparse`` set.

    Differences of two ``k``-sparse vectors are ``2k``-sparse, so the
    constants are the extreme eigenvalues of ``G_S^T G_S`` over all supports
    ``S`` of size ``min(2k, n)`` (smaller supports are covered by interlacing).
    """
    if not model.is_linear:
        raise InvalidInput("exact RIP constants are only available for linear models")
    if not isinstance(A, KSparse):
        raise InvalidInput("exact RIP constants are only available for KSparse sets")
    s = min(2 * A.k, A.n)
    if math.comb(A.n, s) > max_supports:
        raise InvalidInput(f"C({A.n}, {s}) supports exceed the budget {max_supports}")
    lo, hi = np.inf, -np.inf
    G = model.matrix
    for supp in itertools.combinations(range(A.n), s):
        sub = G[:, supp]
        ev = np.linalg.eigvalsh(sub.T @ sub)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
    return RipEstimate(float(lo), float(hi), math.comb(A.n, s), repr(A), 0, method="exact enumeration")


@dataclass
class CEstimate:
    """Linearization constant ``C``.

    ``empirical`` is the largest sampled ratio
    ``||Phi(x1) - Phi(x2) - J(x1)(x1 - x2)||^2 / ||x1 - x2||^2``.
    ``analytic`` is ``beta * M`` for composed models; ``analytic_rigorous`` is
    ``beta * (2 M)^2``, which follows from the mean value theorem since
    ``|h'(a) - h'(b)| <= 2 M``, and is the smaller of the two when ``M < 1/4``.
    """

    empirical: float
    analytic: Optional[float]
    analytic_rigorous: Optional[float]
    trials: int
    beta: Optional[float] = None

    def to_record(self):
        return {
            "C_empirical": self.empirical,
            "C_analytic": self.analytic,
            "C_analytic_rigorous": self.analytic_rigorous,
            "beta_used": self.beta,
            "trials": self.trials,
        }


def estimate_C(model, A=None, trials=2000, seed=0, pairs=None, beta=None):
    """Estimate the linearization constant of ``model`` over pairs in ``A``.

    Parameters
    ----------
    pairs : tuple of arrays, optional
        Explicit ``(x1, x2)`` rows to use instead of sampling from ``A``.
    beta : float, optional
        Upper RIP constant for the analytic value; defaults to the squared
        operator norm of the gain matrix, which is always safe.
    """
    if pairs is None:
        if A is None:
            raise InvalidInput("either a constraint set or explicit pairs are required")
        x1, x2, _ = sample_triples(A, trials, seed)
    else:
        x1, x2 = (np.atleast_2d(np.asarray(p, dtype=float)) for p in pairs)
    if model.is_linear:
        ratios = np.zeros(len(x1))
    else:
        ratios = np.empty(len(x1))
        for i, (a, b) in enumerate(zip(x1, x2)):
            d = a - b
            den = d @ d
            if den == 0:
                raise InvalidInput("degenerate pair with x1 == x2")
            r = model.forward(a) - model.forward(b) - model.jacobian_apply(a, d)
            ratios[i] = (r @ r) / den
    if model.is_linear:
        return CEstimate(0.0, 0.0, 0.0, len(ratios), beta)
    if beta is None:
        beta = model.operator_norm_sq()
    M = model.derivative_bound
    return CEstimate(float(ratios.max()), beta * M, beta * (2 * M) ** 2, len(ratios), beta)


@dataclass
class Lemma1Constants:
    lower: float
    upper: float
    vacuous: bool


def lemma1_constants(alpha, beta, M):
    """RIP constants of ``G (I + H')`` from those of ``G`` and ``|h'| <= M``.

    Returns
    -------
    dict
        ``{Variant.AS_PRINTED: ..., Variant.DERIVATION_CONSISTENT: ...}``.
        Both share the lower constant ``(sqrt(alpha) - sqrt(beta) M)^2``; the
        upper constant is ``beta (1 - M)^2`` as stated and ``beta (1 + M)^2``
        from the triangle-inequality chain. ``vacuous`` is set when
        ``sqrt(alpha) - sqrt(beta) M <= 0``, i.e. no positive lower constant.
    """
    if not (alpha > 0 and beta > 0):
        raise InvalidInput("alpha and beta must be positive")
    if not 0 <= M < 1:
        raise InvalidInput(f"derivative bound must satisfy 0 <= M < 1, got {M}")
    root = math.sqrt(alpha) - math.sqrt(beta) * M
    lower = root**2
    vacuous = root <= 0
    if M == 0:
        # avoid sqrt round trip so M = 0 returns (alpha, beta) exactly
        lower = float(alpha)
    return {
        Variant.AS_PRINTED: Lemma1Constants(lower, beta * (1 - M) ** 2, vacuous),
        Variant.DERIVATION_CONSISTENT: Lemma1Constants(lower, beta * (1 + M) ** 2, vacuous),
    }


# ---------------------------------------------------------------------------
# bound reports


@dataclass
class BoundReport:
    """Evaluated recovery bound.

    ``a = 2/(mu alpha) - 2`` and ``b = 4/alpha`` are always the constants of
    the linearized-iteration recursion. ``contraction`` is the per-iteration
    factor the particular bound relies on. ``k_star`` is ``None`` when the
    target accuracy is only reached in the limit (zero error floor), and
    ``error_bound`` is ``inf`` when the bound does not apply (see ``flags``).
    """

    variant: Variant
    a: float
    b: float
    epsilon_k: float
    k_star: Optional[int]
    error_bound: float
    contraction: float
    constant: float = math.nan
    asymptotic_cap: Optional[float] = None
    asymptotic_bound: Optional[float] = None
    flags: tuple = ()
    inputs: dict = field(default_factory=dict)

    def to_record(self):
        rec = {"variant": self.variant.value}
        rec.update(self.inputs)
        rec.update(
            a=self.a,
            b=self.b,
            contraction=self.contraction,
            constant=self.constant,
            epsilon_k=self.epsilon_k,
            k_star="inf" if self.k_star is None else self.k_star,
            error_bound=self.error_bound,
        )
        if self.asymptotic_cap is not None:
            rec["asymptotic_cap"] = self.asymptotic_cap
            rec["asymptotic_bound"] = self.asymptotic_bound
        rec["flags"] = ",".join(self.flags) if self.flags else "none"
        return rec


def _iteration_count(target_ratio, factor, flags):
    """``ceil(2 ln(target_ratio) / ln(factor))`` floored at zero."""
    if target_ratio == 0:
        flags.append("InfiniteIterations")
        return None
    if math.isinf(target_ratio):
        return 0
    if target_ratio >= 1:
        flags.append("KStarFloored")
        return 0
    return max(0, math.ceil(2 * math.log(target_ratio) / math.log(factor)))


def _recursion_constants(alpha, mu):
    if not (alpha > 0 and mu > 0):
        raise InvalidInput(f"alpha and mu must be positive, got alpha={alpha}, mu={mu}")
    return 2.0 / (mu * alpha) - 2.0, 4.0 / alpha


def theorem1_report(alpha, mu, residual_norms, x_A_norm, delta, dist_x_to_A=0.0):
    """Iteration count and error bound for the linearized iteration.

    With ``a = 2/(mu alpha) - 2``, ``b = 4/alpha`` and the sequence
    ``e_n = ||e_A^n||``::

        eps_k  = b * sum_{n<k} a^(k-1-n) e_n^2
        k_star = ceil(2 ln(delta sqrt(eps_k) / ||x_A||) / ln a)
        bound  = (1 + delta) sqrt(eps_k) + ||x_A - x||

    When the last quarter of ``e_n^2`` has settled (max/min ratio below 1.01)
    the limit cap ``e_lim^2 b / (1 - a)`` and its bound are added too.

    Parameters
    ----------
    residual_norms : sequence of float
        ``||e_A^n||`` for ``n = 0 .. k-1``; ``k`` is its length.
    """
    e = np.asarray(residual_norms, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise InvalidInput("residual_norms must be a non-empty sequence")
    if delta <= 0 or x_A_norm < 0 or dist_x_to_A < 0:
        raise InvalidInput("delta must be positive and norms non-negative")
    a, b = _recursion_constants(alpha, mu)
    k = e.size
    eps2 = e**2
    powers = np.array([a ** (k - 1 - n) for n in range(k)])
    eps_k = float(b * np.sum(powers * eps2))
    flags = []
    applicable = 0 < a < 1
    if not applicable:
        flags.append("NotApplicable")
        k_star = None
    else:
        ratio = math.inf if x_A_norm == 0 else delta * math.sqrt(eps_k) / x_A_norm
        k_star = _iteration_count(ratio, a, flags)
    bound = (1 + delta) * math.sqrt(eps_k) + dist_x_to_A

    cap = cap_bound = None
    tail = eps2[-max(1, k // 4):]
    settled = tail.max() == 0 or (tail.min() > 0 and tail.max() / tail.min() < 1.01)
    if applicable and settled:
        cap = float(eps2[-1] * b / (1 - a))
        cap_bound = math.sqrt(cap) + dist_x_to_A
    inputs = dict(alpha=alpha, mu=mu, k=k, x_A_norm=x_A_norm, delta=delta, dist_x_to_A=dist_x_to_A)
    return BoundReport(
        Variant.AS_PRINTED, a, b, eps_k, k_star, bound, a,
        asymptotic_cap=cap, asymptotic_bound=cap_bound, flags=tuple(flags), inputs=inputs,
    )


def corollary1_report(alpha, mu, C, e_A_norm, dist_x_to_A=0.0):
    """Limit error bound ``c ||e_A|| + ||x_A - x||`` under a linearization constant ``C``.

    ``AS_PRINTED`` uses ``c = 2 / (0.75 alpha - 1/mu - 2C)`` and flags
    ``NegativeConstant`` when the denominator is not positive.
    ``DERIVATION_CONSISTENT`` uses the fixed point of the squared-error
    recursion ``d' <= a' d + (8/alpha) ||e_A||^2`` with
    ``a' = 2 (1/(mu alpha) - 1 + 4C/alpha)``, giving
    ``c' = sqrt((8/alpha) / (1 - max(a', 0)))``; ``a' >= 1`` is flagged
    ``NotApplicable``.

    Returns
    -------
    dict of Variant -> BoundReport
    """
    if C < 0 or e_A_norm < 0 or dist_x_to_A < 0:
        raise InvalidInput("C and norms must be non-negative")
    a, b = _recursion_constants(alpha, mu)
    inputs = dict(alpha=alpha, mu=mu, C=C, e_A_norm=e_A_norm, dist_x_to_A=dist_x_to_A)

    den = 0.75 * alpha - 1.0 / mu - 2 * C
    if den > 0:
        c = 2.0 / den
        printed = BoundReport(Variant.AS_PRINTED, a, b, math.nan, None, c * e_A_norm + dist_x_to_A,
                              a, constant=c, inputs=inputs)
    else:
        printed = BoundReport(Variant.AS_PRINTED, a, b, math.nan, None, math.inf, a,
                              constant=math.inf, flags=("NegativeConstant",), inputs=inputs)

    a_prime = 2.0 * (1.0 / (mu * alpha) - 1.0 + 4.0 * C / alpha)
    if a_prime >= 1:
        derived = BoundReport(Variant.DERIVATION_CONSISTENT, a, b, math.nan, None, math.inf,
                              a_prime, constant=math.inf, flags=("NotApplicable",), inputs=inputs)
    else:
        c = math.sqrt((8.0 / alpha) / (1.0 - max(a_prime, 0.0)))
        derived = BoundReport(Variant.DERIVATION_CONSISTENT, a, b, math.nan, None,
                              c * e_A_norm + dist_x_to_A, a_prime, constant=c, inputs=inputs)
    return {Variant.AS_PRINTED: printed, Variant.DERIVATION_CONSISTENT: derived}


def theorem2_report(alpha, mu, f_opt, x_opt_norm, delta, dist_x_to_opt=0.0):
    """Iteration count and error bound for projected gradient descent.

    With ``c = 4 (1 - mu alpha)`` the squared distance to the constrained
    minimizer obeys ``||x^n - x_opt||^2 <= c^n ||x_opt||^2 + 4 mu f_opt / (1 - c)``.

    ``AS_PRINTED``
        ``n* = 2 ln(delta f_opt / ||x_opt||) / ln c`` and bound
        ``(2 sqrt(mu / (1 - c)) + delta) f_opt + ||x - x_opt||``.
    ``DERIVATION_CONSISTENT``
        the same with ``sqrt(f_opt)`` in place of ``f_opt``, which is what the
        square root of the recursion above produces.

    ``n*`` is rounded up and floored at zero; ``c`` outside ``(0, 1)`` is
    flagged ``NotApplicable``.
    """
    if f_opt < 0:
        raise InvalidInput(f"objective value must be non-negative, got {f_opt}")
    if delta <= 0 or x_opt_norm < 0 or dist_x_to_opt < 0:
        raise InvalidInput("delta must be positive and norms non-negative")
    a, b = _recursion_constants(alpha, mu)
    c = pgd_contraction(mu, alpha)
    inputs = dict(alpha=alpha, mu=mu, f_opt=f_opt, x_opt_norm=x_opt_norm, delta=delta,
                  dist_x_to_opt=dist_x_to_opt)
    reports = {}
    for variant, scale in (
        (Variant.AS_PRINTED, f_opt),
        (Variant.DERIVATION_CONSISTENT, math.sqrt(f_opt)),
    ):
        flags = []
        if not 0 < c < 1:
            flags.append("NotApplicable")
            reports[variant] = BoundReport(variant, a, b, math.nan, None, math.inf, c,
                                           flags=tuple(flags), inputs=inputs)
            continue
        ratio = math.inf if x_opt_norm == 0 else delta * scale / x_opt_norm
        n_star = _iteration_count(ratio, c, flags)
        coef = 2 * math.sqrt(mu / (1 - c))
        bound = (coef + delta) * scale + dist_x_to_opt
        reports[variant] = BoundReport(variant, a, b, math.nan, n_star, bound, c, constant=coef,
                                       flags=tuple(flags), inputs=inputs)
    return reports


# ---------------------------------------------------------------------------
# restricted strict convexity


@dataclass
class RscpEstimate:
    alpha_hat: float
    beta_hat: float
    trials: int
    quotients: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def not_rscp(self):
        """True when some sampled quotient is not positive."""
        return self.alpha_hat <= 0

    def to_record(self):
        return {
            "alpha_hat": self.alpha_hat,
            "beta_hat": self.beta_hat,
            "trials": self.trials,
            "flags": "NotRSCP" if self.not_rscp else "none",
        }


def rscp_quotients(obj, x1, x2):
    """``(f(x1) - f(x2) - <grad f(x2), x1 - x2>) / ||x1 - x2||^2`` row by row."""
    x1, x2 = np.atleast_2d(x1), np.atleast_2d(x2)
    q = np.empty(len(x1))
    for i, (a, b) in enumerate(zip(x1, x2)):
        d = a - b
        den = d @ d
        if den == 0:
            raise InvalidInput("degenerate pair with x1 == x2")
        q[i] = (obj.evaluate(a) - obj.evaluate(b) - np.dot(obj.gradient(b), d)) / den
    return q


def rscp_probe(obj, A, trials=2000, seed=0, pairs=None):
    """Sample the restricted strict convexity quotient of ``obj``.

    Each pair has ``x2`` drawn from ``A`` and ``x1 = x2 + a1 + a2 + a3`` with
    ``a1, a2, a3`` drawn from ``A``, so the difference lies in ``A + A + A``.
    Explicit ``pairs = (x1, x2)`` bypass the sampler.
    """
    if pairs is None:
        if trials < 1:
            raise InvalidInput(f"trials must be >= 1, got {trials}")
        rng = _rng(seed)
        x1 = np.empty((trials, A.n))
        x2 = np.empty((trials, A.n))
        for t in range(trials):
            while True:
                base = A.sample(rng)
                d = A.sample(rng) + A.sample(rng) + A.sample(rng)
                if np.any(d != 0):
                    break
            x1[t], x2[t] = base + d, base
    else:
        x1, x2 = pairs
    q = rscp_quotients(obj, x1, x2)
    return RscpEstimate(float(q.min()), float(q.max()), len(q), q)


# ---------------------------------------------------------------------------
# non-convexity of the least-squares objective


@dataclass
class CounterexampleReport:
    """Witness that ``x -> ||y - Phi(x)||^2`` is not convex on ``A + A``.

    ``gap`` is ``(f(x1) + f(x2)) / 2 - f((x1 + x2) / 2)``; a witness has
    ``gap < 0``.
    """

    found: bool
    trials_used: int
    budget_exhausted: bool
    y: Optional[np.ndarray] = None
    x1: Optional[np.ndarray] = None
    x2: Optional[np.ndarray] = None
    gap: Optional[float] = None

    def to_record(self):
        rec = {"found": self.found, "trials_used": self.trials_used,
               "budget_exhausted": self.budget_exhausted}
        if self.found:
            rec.update(gap=self.gap, y=list(self.y), x1=list(self.x1), x2=list(self.x2))
        return rec


def convexity_counterexample(model, A, seed=0, trials=1000, spread=np.pi):
    """Search for a midpoint-convexity violation of ``||y - Phi(x)||^2``.

    Each trial draws ``x1, x2`` in the sum of two random components of ``A``
    (coordinates uniform in ``[-spread, spread]`` with respect to an
    orthonormal basis of that sum) and sets
    ``d = Phi(xbar) - (Phi(x1) + Phi(x2)) / 2`` with ``xbar`` the midpoint.
    For ``y = -t d`` the convexity gap equals ``-2 t ||d||^2`` plus a constant,
    so a large enough ``t`` produces a violation whenever ``d != 0``. The gap
    is re-evaluated directly from the objective before a witness is accepted.
    An affine ``Phi`` gives ``d = 0`` up to rounding and never yields one.
    """
    rng = _rng(seed)

    def f(y, x):
        r = y - model.forward(x)
        return float(r @ r)

    for t in range(trials):
        basis = orth(np.hstack([A.basis(A.random_component(rng)),
                                A.basis(A.random_component(rng))]))
        x1 = basis @ rng.uniform(-spread, spread, basis.shape[1])
        x2 = basis @ rng.uniform(-spread, spread, basis.shape[1])
        xbar = 0.5 * (x1 + x2)
        y1, y2, ybar = model.forward(x1), model.forward(x2), model.forward(xbar)
        d = ybar - 0.5 * (y1 + y2)
        dd = float(d @ d)
        scale = 1.0 + float(y1 @ y1 + y2 @ y2)
        if dd <= (1e-10 * scale) ** 2:
            continue
        const = 0.5 * float(y1 @ y1 + y2 @ y2) - float(ybar @ ybar)
        y = -((abs(const) + 1.0) / dd) * d
        gap = 0.5 * (f(y, x1) + f(y, x2)) - f(y, xbar)
        if gap < -1e-9 * (1.0 + f(y, xbar)):
            return CounterexampleReport(True, t + 1, False, y, x1, x2, gap)
    return CounterexampleReport(False, trials, True)
