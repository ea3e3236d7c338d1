"""Synthetic problems, single trials, parameter sweeps and a brute-force oracle.

Every random draw flows from an integer seed. A sweep derives one seed per
``(base_seed, cell, trial)`` through :class:`numpy.random.SeedSequence`, so any
single trial can be replayed on its own and results do not depend on how
trials are spread over worker processes.
"""
import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from ._util import as_signal, format_value
from .analysis import corollary1_report, estimate_C, estimate_rip, Variant
from .constraints import KSparse
from .errors import Diverged, DomainViolation, InfeasibleStep, InvalidInput
from .operators import MeasurementModel, make_nonlinearity
from .solvers import SolverConfig, admissible_step_niht, niht_solve

__all__ = [
    "ProblemSpec",
    "Problem",
    "TrialRecord",
    "CellSummary",
    "SWEEP_COLUMNS",
    "generate_problem",
    "load_matrix",
    "save_matrix",
    "exhaustive_oracle",
    "residual_norm",
    "trial_seed",
    "run_trial",
    "run_sweep",
    "sweep_csv",
]

SWEEP_COLUMNS = (
    "cell_id", "N", "M", "k", "h_kind", "h_scale", "noise_sigma", "trials",
    "success_rate", "mean_rel_err", "mean_iters", "mu_used",
    "alpha_hat", "beta_hat", "C_hat", "skip_reason",
)


@dataclass(frozen=True)
class ProblemSpec:
    """Recipe for one synthetic recovery problem.

    ``ensemble`` is ``"gaussian"`` (i.i.d. N(0, 1/M) gains), ``"identity"``
    (requires ``M == N``) or ``"file"`` (gains read from ``matrix_file``).
    ``nonlinearity`` is ``"linear"`` for ``Phi = G`` or a catalogue name
    (``identity``, ``sine``, ``tanh``, ``cubic``) for ``Phi = G (x + h(x))``.
    """

    N: int
    M: int
    k: int
    ensemble: str = "gaussian"
    matrix_file: Optional[str] = None
    nonlinearity: str = "linear"
    h_scale: float = 0.0
    h_radius: Optional[float] = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("N", "M", "k"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise InvalidInput(f"{name} must be a positive integer, got {v!r}")
        if self.k > self.N:
            raise InvalidInput(f"k={self.k} exceeds N={self.N}")
        if self.ensemble not in ("gaussian", "identity", "file"):
            raise InvalidInput(f"unknown matrix ensemble {self.ensemble!r}")
        if self.ensemble == "identity" and self.M != self.N:
            raise InvalidInput("identity ensemble requires M == N")
        if self.ensemble == "file" and not self.matrix_file:
            raise InvalidInput("file ensemble requires matrix_file")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InvalidInput(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInput(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")

    def build_model(self, rng=None):
        if self.ensemble == "gaussian":
            if rng is None:
                rng = np.random.default_rng(self.seed)
            G = rng.standard_normal((self.M, self.N)) / math.sqrt(self.M)
        elif self.ensemble == "identity":
            G = np.eye(self.N)
        else:
            G = load_matrix(self.matrix_file)
            if G.shape != (self.M, self.N):
                raise InvalidInput(
                    f"matrix file has shape {G.shape}, spec asks for ({self.M}, {self.N})"
                )
        h = None
        if self.nonlinearity != "linear":
            h = make_nonlinearity(self.nonlinearity, self.h_scale, self.h_radius)
        return MeasurementModel(G, h, self.noise_sigma)


class Problem(NamedTuple):
    model: MeasurementModel
    x0: np.ndarray
    y: np.ndarray
    noise: np.ndarray


def generate_problem(spec):
    """Draw ``(model, x0, y, noise)`` deterministically from ``spec.seed``.

    The draw order is fixed: gain matrix (Gaussian ensemble only), support,
    coefficients, then a standard normal vector ``z``. ``z`` is always drawn
    and ``noise = noise_sigma * z``, so changing ``noise_sigma`` rescales the
    noise without touching anything else.
    """
    rng = np.random.default_rng(spec.seed)
    model = spec.build_model(rng)
    support = np.sort(rng.permutation(spec.N)[: spec.k])
    coef = rng.standard_normal(spec.k)
    while not np.all(coef != 0):
        coef = rng.standard_normal(spec.k)
    x0 = np.zeros(spec.N)
    x0[support] = coef / np.linalg.norm(coef)
    z = rng.standard_normal(spec.M)
    noise = spec.noise_sigma * z
    y = model.forward(x0) + noise
    return Problem(model, x0, y, noise)


def load_matrix(path):
    """Read a gain matrix: a header line ``M N`` then ``M`` rows of ``N`` numbers."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise InvalidInput(f"cannot read matrix file {path}: {exc}") from None
    if not lines:
        raise InvalidInput(f"{path}: empty matrix file")
    try:
        m, n = (int(t) for t in lines[0].split())
    except ValueError:
        raise InvalidInput(f"{path}:1: header must be two integers 'M N'") from None
    if m < 1 or n < 1:
        raise InvalidInput(f"{path}:1: dimensions must be positive")
    if len(lines) - 1 != m:
        raise InvalidInput(f"{path}: header declares {m} rows, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        try:
            row = [float(t) for t in ln.split()]
        except ValueError:
            raise InvalidInput(f"{path}:{i}: non-numeric entry") from None
        if len(row) != n:
            raise InvalidInput(f"{path}:{i}: expected {n} entries, found {len(row)}")
        rows.append(row)
    G = np.array(rows)
    if not np.all(np.isfinite(G)):
        raise InvalidInput(f"{path}: non-finite entries")
    return G


def save_matrix(path, G):
    G = np.asarray(G, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"{G.shape[0]} {G.shape[1]}\n")
        for row in G:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def residual_norm(y, model, x):
    return float(np.linalg.norm(y - model.forward(x)))


# ---------------------------------------------------------------------------
# brute-force oracle


def _restricted_gauss_newton(y, model, support, max_iter=50):
    G_S = model.matrix[:, list(support)]
    c = np.linalg.lstsq(G_S, y, rcond=None)[0]
    if model.is_linear:
        return c
    h = model.nonlinearity
    n = model.shape[1]

    def full(coef):
        x = np.zeros(n)
        x[list(support)] = coef
        return x

    def res(coef):
        try:
            return float(np.linalg.norm(y - model.forward(full(coef))))
        except DomainViolation:
            return math.inf

    if not math.isfinite(res(c)):
        c = np.clip(c, -h.radius, h.radius) if hasattr(h, "radius") else c
    current = res(c)
    for _ in range(max_iter):
        x = full(c)
        r = y - model.forward(x)
        J_S = G_S * (1.0 + h.derivative(c))[None, :]
        step = np.linalg.lstsq(J_S, r, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            trial = res(c + t * step)
            if trial <= current:
                break
            t *= 0.5
        else:
            break
        moved = t * np.linalg.norm(step)
        c, previous, current = c + t * step, current, trial
        if moved <= 1e-15 * (1 + np.linalg.norm(c)) or previous - current <= 1e-16:
            break
    return c


def exhaustive_oracle(y, model, k, max_supports=100_000):
    """Best ``k``-sparse fit over every support.

    For each support ``S`` the coefficients start at the least-squares
    solution of ``G_S c = y``; composed models then take up to 50 Gauss-Newton
    steps with the restricted Jacobian, halving a step until the residual does
    not increase. The fit with the smallest residual wins, ties going to the
    lexicographically first support.

    Raises
    ------
    InvalidInput
        If ``C(N, k)`` exceeds ``max_supports``.
    """
    m, n = model.shape
    y = as_signal(y, "y", m)
    if not 1 <= k <= n:
        raise InvalidInput(f"k must lie in [1, {n}], got {k}")
    if math.comb(n, k) > max_supports:
        raise InvalidInput(f"C({n}, {k}) = {math.comb(n, k)} supports exceed the budget {max_supports}")
    best, best_res = None, math.inf
    for support in itertools.combinations(range(n), k):
        c = _restricted_gauss_newton(y, model, support)
        x = np.zeros(n)
        x[list(support)] = c
        try:
            r = residual_norm(y, model, x)
        except DomainViolation:
            continue
        if r < best_res:
            best, best_res = x, r
    if best is None:
        raise InvalidInput("no support admits a fit inside the model domain")
    return best


# ---------------------------------------------------------------------------
# trials and sweeps


@dataclass
class TrialRecord:
    N: int
    M: int
    k: int
    h_kind: str
    h_scale: float
    noise_sigma: float
    seed: int
    error: float = math.nan
    rel_error: float = math.nan
    success: bool = False
    iterations: int = 0
    stop_reason: str = ""
    final_residual: float = math.nan
    mu: float = math.nan
    alpha_hat: float = math.nan
    beta_hat: float = math.nan
    C_hat: float = math.nan
    skip_reason: str = ""
    bound: Optional[float] = None
    wall_time: float = field(default=math.nan, compare=False)

    def to_record(self, include_time=False):
        rec = asdict(self)
        if not include_time:
            rec.pop("wall_time")
        if rec["bound"] is None:
            rec.pop("bound")
        return rec


def trial_seed(base_seed, cell, trial):
    """64-bit seed for one trial of one sweep cell."""
    ss = np.random.SeedSequence([int(base_seed), int(cell), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_trial(
    spec,
    mu="auto",
    max_iterations=1000,
    residual_tolerance=1e-8,
    iterate_change_tolerance=1e-10,
    success_threshold=1e-4,
    rip_trials=2000,
    enforce_step_condition=False,
    report_bound=False,
):
    """Generate one problem, estimate its constants and run the solver.

    ``mu="auto"`` picks ``1 / beta_hat``. With ``enforce_step_condition`` the
    step must satisfy ``beta_hat <= 1/mu < 1.5 alpha_hat - 4 C_hat``; otherwise
    the trial is returned unsolved with ``skip_reason`` set.
    """
    start = time.perf_counter()
    problem = generate_problem(spec)
    model = problem.model
    A = KSparse(spec.N, spec.k)
    rec = TrialRecord(spec.N, spec.M, spec.k, model.h_kind, model.h_scale,
                      spec.noise_sigma, int(spec.seed))
    est_seed = np.random.SeedSequence([int(spec.seed), 1])
    rip = estimate_rip(model, A, trials=rip_trials, seed=np.random.default_rng(est_seed))
    rec.alpha_hat, rec.beta_hat = rip.alpha_hat, rip.beta_hat
    if model.is_linear:
        rec.C_hat = 0.0
    else:
        c_seed = np.random.SeedSequence([int(spec.seed), 2])
        rec.C_hat = estimate_C(model, A, trials=rip_trials, seed=np.random.default_rng(c_seed)).empirical
    rec.mu = 1.0 / rip.beta_hat if mu == "auto" else float(mu)

    if enforce_step_condition:
        try:
            window = admissible_step_niht(rec.alpha_hat, rec.beta_hat, rec.C_hat)
        except InfeasibleStep as exc:
            rec.skip_reason = f"Infeasible: {exc}"
        else:
            if rec.mu not in window:
                rec.skip_reason = f"Infeasible: mu={rec.mu:.6g} outside {window}"
        if rec.skip_reason:
            rec.wall_time = time.perf_counter() - start
            return rec

    cfg = SolverConfig(rec.mu, max_iterations, residual_tolerance, iterate_change_tolerance,
                       record_trace=False)
    try:
        result = niht_solve(problem.y, model, A, cfg)
        estimate = result.estimate
        rec.iterations, rec.stop_reason = result.iterations_run, result.stop_reason.value
        rec.final_residual = result.final_value
    except Diverged as exc:
        estimate = exc.last_finite
        rec.iterations, rec.stop_reason = exc.iteration, "Diverged"
    except DomainViolation as exc:
        estimate = np.zeros(spec.N)
        rec.stop_reason = "DomainViolation"
        rec.skip_reason = str(exc)
    rec.error = float(np.linalg.norm(estimate - problem.x0))
    rec.rel_error = rec.error / float(np.linalg.norm(problem.x0))
    rec.success = bool(rec.rel_error < success_threshold)
    if report_bound:
        e_A = residual_norm(problem.y, model, A.project(problem.x0))
        rep = corollary1_report(rec.alpha_hat, rec.mu, rec.C_hat, e_A)
        rec.bound = rep[Variant.DERIVATION_CONSISTENT].error_bound
    rec.wall_time = time.perf_counter() - start
    return rec


@dataclass
class CellSummary:
    cell_id: int
    N: int
    M: int
    k: int
    h_kind: str
    h_scale: float
    noise_sigma: float
    trials: int
    success_rate: float = math.nan
    mean_rel_err: float = math.nan
    mean_iters: float = math.nan
    mu_used: float = math.nan
    alpha_hat: float = math.nan
    beta_hat: float = math.nan
    C_hat: float = math.nan
    skip_reason: str = ""
    records: list = field(default_factory=list, repr=False)

    def row(self):
        return [format_value(getattr(self, c)) for c in SWEEP_COLUMNS]


def _run_trial_job(job):
    spec, options = job
    return run_trial(spec, **options)


def _summarize(cell_id, spec, records):
    out = CellSummary(cell_id, spec.N, spec.M, spec.k,
                      records[0].h_kind if records else spec.nonlinearity,
                      spec.h_scale, spec.noise_sigma, len(records), records=records)
    skipped = [r for r in records if r.skip_reason]
    if records:
        out.alpha_hat = min(r.alpha_hat for r in records)
        out.beta_hat = max(r.beta_hat for r in records)
        out.C_hat = max(r.C_hat for r in records)
        out.mu_used = float(np.mean([r.mu for r in records]))
    if skipped:
        out.skip_reason = f"Skipped ({len(skipped)}/{len(records)} trials): {skipped[0].skip_reason}"
        return out
    out.success_rate = float(np.mean([r.success for r in records]))
    out.mean_rel_err = float(np.mean([r.rel_error for r in records]))
    out.mean_iters = float(np.mean([r.iterations for r in records]))
    return out


def run_sweep(base, Ms=None, ks=None, h_scales=None, trials_per_cell=10, base_seed=0,
              jobs=1, **trial_options):
    """Run a grid of cells over ``M``, ``k`` and nonlinearity scale.

    Cells are enumerated with ``M`` outermost and ``h_scale`` innermost; a
    grid axis left as ``None`` takes the value of ``base``. Trial ``t`` of cell
    ``c`` uses seed :func:`trial_seed` ``(base_seed, c, t)``. Extra keyword
    arguments go to :func:`run_trial`.

    A cell in which any trial violates the enforced step condition is marked
    skipped; its rates are left as NaN.

    Returns
    -------
    list of CellSummary
        One per cell, in grid order regardless of ``jobs``.
    """
    Ms = [base.M] if Ms is None else list(Ms)
    ks = [base.k] if ks is None else list(ks)
    h_scales = [base.h_scale] if h_scales is None else list(h_scales)
    if not (Ms and ks and h_scales):
        raise InvalidInput("sweep grid must be non-empty")
    if trials_per_cell < 1:
        raise InvalidInput(f"trials_per_cell must be >= 1, got {trials_per_cell}")
    if jobs < 1:
        raise InvalidInput(f"jobs must be >= 1, got {jobs}")
    cells = []
    for cell_id, (m, k, s) in enumerate(itertools.product(Ms, ks, h_scales)):
        spec = replace(base, M=m, k=k, h_scale=s, seed=0)
        cells.append((cell_id, spec))
    job_list = [
        (replace(spec, seed=trial_seed(base_seed, cell_id, t)), trial_options)
        for cell_id, spec in cells
        for t in range(trials_per_cell)
    ]
    if jobs == 1:
        records = [_run_trial_job(j) for j in job_list]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_trial_job, job_list, chunksize=max(1, len(job_list) // (4 * jobs))))
    out = []
    for i, (cell_id, spec) in enumerate(cells):
        chunk = records[i * trials_per_cell:(i + 1) * trials_per_cell]
        out.append(_summarize(cell_id, spec, chunk))
    return out


def sweep_csv(summaries, path=None):
    """Render sweep summaries as CSV text, also writing it to ``path`` if given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for s in summaries:
        writer.writerow(s.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
