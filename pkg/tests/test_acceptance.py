"""Acceptance criteria, one test each.

Every test prints a single ``[criterion N] PASS|FAIL ...`` line to the
terminal and then asserts. Oracles are written here, independently of the
library code they check.
"""
import math
import time

import numpy as np
import pytest

from nliht import (
    Cubic,
    Identity,
    KSparse,
    MeasurementModel,
    ProblemSpec,
    ScaledSine,
    ScaledTanh,
    SolverConfig,
    Variant,
    convexity_counterexample,
    corollary1_report,
    estimate_C,
    estimate_rip,
    exhaustive_oracle,
    fd_jacobian_check,
    generate_problem,
    least_squares_objective,
    niht_solve,
    pgd_solve,
    residual_norm,
    rscp_probe,
    run_sweep,
    sample_triples,
    sweep_csv,
    theorem1_report,
    theorem2_report,
    trial_seed,
)

SWEEP_SEED = 20240611


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return emit


def gaussian_instances(count, n, m, k, h=None, base_seed=0):
    out = []
    for t in range(count):
        rng = np.random.default_rng(trial_seed(base_seed, 0, t))
        G = rng.standard_normal((m, n)) / math.sqrt(m)
        x0 = np.zeros(n)
        x0[rng.permutation(n)[:k]] = rng.standard_normal(k)
        out.append((G, x0 / np.linalg.norm(x0)))
    return out


# ---------------------------------------------------------------------------


def test_c01_linear_reduction(report):
    start = time.perf_counter()
    worst = 0.0
    for G, x0 in gaussian_instances(20, 64, 32, 4, base_seed=1):
        linear = MeasurementModel(G)
        composed = MeasurementModel(G, Identity())
        A = KSparse(64, 4)
        mu = 1.0 / estimate_rip(linear, A, trials=200, seed=0).beta_hat
        cfg = SolverConfig(mu, max_iterations=500)
        y = G @ x0
        a = niht_solve(y, linear, A, cfg).iterates()
        b = niht_solve(y, composed, A, cfg).iterates()
        assert a.shape == b.shape
        worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5
    report(1, ok, f"max coordinate gap {worst:.3g} (<= 1e-12), {elapsed:.2f}s (< 5s)")
    assert ok


@pytest.fixture(scope="module")
def linear_sweep():
    def run():
        start = time.perf_counter()
        rows = run_sweep(
            ProblemSpec(256, 128, 8), trials_per_cell=50, base_seed=SWEEP_SEED,
            mu="auto", max_iterations=500, success_threshold=1e-6, rip_trials=2000,
        )
        return rows, sweep_csv(rows), time.perf_counter() - start

    first = run()
    return first, run


def test_c02_noiseless_linear_recovery(linear_sweep, report):
    (rows, _, elapsed), _ = linear_sweep
    (cell,) = rows
    # independent recount from the per-trial records
    recount = np.mean([r.rel_error < 1e-6 and r.iterations <= 500 for r in cell.records])
    ok = cell.success_rate >= 0.95 and recount == cell.success_rate and elapsed < 30
    report(2, ok, f"success {cell.success_rate:.2f} (>= 0.95), {elapsed:.1f}s (< 30s)")
    assert ok


@pytest.fixture(scope="module")
def nonlinear_runs():
    """Criterion-3 trials with full traces, shared with the contraction check."""
    start = time.perf_counter()
    runs = []
    for t in range(50):
        spec = ProblemSpec(256, 128, 8, nonlinearity="sine", h_scale=0.05,
                           seed=trial_seed(SWEEP_SEED + 1, 0, t))
        p = generate_problem(spec)
        A = KSparse(256, 8)
        rip = estimate_rip(p.model, A, trials=2000, seed=np.random.default_rng([spec.seed, 1]))
        C = estimate_C(p.model, A, trials=2000, seed=np.random.default_rng([spec.seed, 2])).empirical
        mu = 1.0 / rip.beta_hat
        res = niht_solve(p.y, p.model, A, SolverConfig(mu, max_iterations=1000), ground_truth=p.x0)
        runs.append(dict(x0=p.x0, result=res, alpha=rip.alpha_hat, beta=rip.beta_hat, C=C, mu=mu))
    return runs, time.perf_counter() - start


def test_c03_mildly_nonlinear_recovery(nonlinear_runs, report):
    runs, elapsed = nonlinear_runs
    successes, bounds_ok, applicable = 0, True, 0
    for r in runs:
        err = float(np.linalg.norm(r["result"].estimate - r["x0"]))
        if err / np.linalg.norm(r["x0"]) >= 1e-3:
            continue
        successes += 1
        # noiseless with x0 in A: e_A = 0 and dist(x0, A) = 0
        bound = corollary1_report(r["alpha"], r["mu"], r["C"], 0.0, 0.0)[Variant.DERIVATION_CONSISTENT]
        applicable += "NotApplicable" not in bound.flags
        bounds_ok &= err <= bound.error_bound + 1e-3 and err <= 0.0 + 1e-3
    rate = successes / len(runs)
    ok = rate >= 0.90 and bounds_ok and elapsed < 60
    report(3, ok, f"success {rate:.2f} (>= 0.90), errors within bound: {bounds_ok} "
                  f"(bound finite in {applicable}/{successes}), {elapsed:.1f}s (< 60s)")
    assert ok


def test_c04_oracle_equivalence(report):
    start = time.perf_counter()
    close, worst_excess = 0, -math.inf
    for t in range(20):
        spec = ProblemSpec(8, 6, 2, nonlinearity="sine", h_scale=0.05, seed=trial_seed(7, 0, t))
        p = generate_problem(spec)
        A = KSparse(8, 2)
        mu = 1.0 / estimate_rip(p.model, A, trials=2000, seed=spec.seed).beta_hat
        res = niht_solve(p.y, p.model, A, SolverConfig(mu, max_iterations=1000))
        r_solver = residual_norm(p.y, p.model, res.estimate)
        r_oracle = residual_norm(p.y, p.model, exhaustive_oracle(p.y, p.model, 2))
        close += abs(r_solver - r_oracle) <= 1e-6
        worst_excess = max(worst_excess, r_oracle - r_solver)
    elapsed = time.perf_counter() - start
    ok = close >= 18 and worst_excess <= 1e-9 and elapsed < 10
    report(4, ok, f"{close}/20 within 1e-6 of oracle (>= 18), oracle excess {worst_excess:.3g} "
                  f"(<= 1e-9), {elapsed:.2f}s (< 10s)")
    assert ok


def contraction_violations(result, alpha, mu, C):
    factor = 2.0 * (1.0 / (mu * alpha) - 1.0 + 4.0 * C / alpha)
    d = [rec.truth_distance**2 for rec in result.trace]
    return sum(d[n + 1] > factor * d[n] + 1e-9 for n in range(len(d) - 1)), len(d) - 1


def test_c05_contraction_inequality(nonlinear_runs, report):
    runs, _ = nonlinear_runs
    bad = checked = feasible = 0
    for r in runs:
        if r["beta"] < 1.5 * r["alpha"] - 4 * r["C"]:
            feasible += 1
        # checked on every run, which contains the feasible ones
        v, n = contraction_violations(r["result"], r["alpha"], r["mu"], r["C"])
        bad, checked = bad + v, checked + n

    # a regime where the step condition holds, so the inequality is not vacuous
    extra_bad = extra_checked = extra_feasible = 0
    for t in range(10):
        spec = ProblemSpec(16, 800, 1, nonlinearity="sine", h_scale=0.01, seed=trial_seed(5, 0, t))
        p = generate_problem(spec)
        A = KSparse(16, 1)
        rip = estimate_rip(p.model, A, trials=2000, seed=spec.seed)
        C = estimate_C(p.model, A, trials=2000, seed=spec.seed).empirical
        if not rip.beta_hat < 1.5 * rip.alpha_hat - 4 * C:
            continue
        extra_feasible += 1
        mu = 1.0 / rip.beta_hat
        res = niht_solve(p.y, p.model, A, SolverConfig(mu, residual_tolerance=0, max_iterations=60),
                         ground_truth=p.x0)
        v, n = contraction_violations(res, rip.alpha_hat, mu, C)
        extra_bad, extra_checked = extra_bad + v, extra_checked + n

    ok = bad == 0 and extra_bad == 0 and extra_feasible > 0
    report(5, ok, f"{bad} violations in {checked} steps of the criterion-3 runs "
                  f"({feasible}/50 with feasible mu); {extra_bad} in {extra_checked} steps "
                  f"over {extra_feasible} feasible-regime runs")
    assert ok


def test_c06_jacobian_validity(report):
    rng = np.random.default_rng(6)
    G = rng.standard_normal((5, 7))
    models = [
        MeasurementModel(G),
        MeasurementModel(G, Identity()),
        MeasurementModel(G, ScaledSine(0.5)),
        MeasurementModel(G, ScaledTanh(0.5)),
        MeasurementModel(G, Cubic(0.1, 1.5)),
    ]
    worst = 0.0
    for model in models:
        for _ in range(10):
            p = rng.uniform(-1.4, 1.4, 7)
            worst = max(worst, fd_jacobian_check(model, p, 1e-6))
    sine = models[2]
    corrupted = fd_jacobian_check(sine, rng.uniform(-1, 1, 7), 1e-6,
                                  jacobian=lambda p, v: 1.01 * sine.jacobian_apply(p, v))
    ok = worst < 1e-4 and corrupted > 1e-3
    report(6, ok, f"max deviation {worst:.3g} (< 1e-4), corrupted control {corrupted:.3g} (> 1e-3)")
    assert ok


def test_c07_bound_arithmetic(report):
    # independent evaluations: explicit loops and closed forms, no library code
    a, b = 0.5, 4.0
    eps3 = 0.0
    for _ in range(3):
        eps3 = a * eps3 + b * 1.0
    geometric = b * (1 - a**3) / (1 - a)
    k_star_ref = math.ceil(2 * math.log(0.01 * 1.0) / math.log(0.5))
    n_star_ref = math.ceil(2 * math.log(0.1) / math.log(0.5))

    rep_eps = theorem1_report(1.0, 0.8, [1.0, 1.0, 1.0], 1.0, 0.01)
    # eps_k = 1 with ||x_A|| = 1 makes the ratio delta sqrt(eps_k)/||x_A|| exactly delta
    rep_k = theorem1_report(1.0, 0.8, [0.5], 1.0, 0.01)
    # mu alpha = 7/8 gives c = 0.5; delta f / ||x_opt|| = 0.1
    rep_n = theorem2_report(1.0, 0.875, 0.1, 1.0, 1.0)[Variant.AS_PRINTED]

    ok = (
        rep_k.k_star == 14 == k_star_ref
        and rep_n.k_star == 7 == n_star_ref and rep_n.contraction == 0.5
        and abs(rep_eps.epsilon_k - 7) <= 1e-12 and eps3 == 7 and abs(geometric - 7) <= 1e-12
    )
    report(7, ok, f"k*={rep_k.k_star} (ref {k_star_ref}), n*={rep_n.k_star} (ref {n_star_ref}), "
                  f"eps_3={rep_eps.epsilon_k:g} (loop {eps3:g}, closed form {geometric:g})")
    assert ok


def test_c08_rscp_rip_identity(report):
    worst = 0.0
    extremes = None
    cases = [
        (np.diag([1.0, 2.0]), KSparse(2, 1)),
        (np.random.default_rng(8).standard_normal((6, 10)), KSparse(10, 2)),
    ]
    for G, A in cases:
        x1, x2, xs = sample_triples(A, 500, seed=3)
        rip = estimate_rip(MeasurementModel(G), A, samples=(x1, x2, xs))
        y = np.random.default_rng(0).standard_normal(G.shape[0])
        rscp = rscp_probe(least_squares_objective(G, y), A, pairs=(x1, x2))
        worst = max(worst, float(np.max(np.abs(rscp.quotients - rip.quotients))))
        if extremes is None:
            extremes = (rscp.alpha_hat, rscp.beta_hat)
    ok = worst <= 1e-9 and abs(extremes[0] - 1) <= 1e-9 and abs(extremes[1] - 4) <= 1e-9
    report(8, ok, f"max quotient gap {worst:.3g} (<= 1e-9), diag(1,2) min/max "
                  f"{extremes[0]:.12g}/{extremes[1]:.12g}")
    assert ok


def test_c09_pgd_iht_equivalence(report):
    worst = 0.0
    for G, x0 in gaussian_instances(10, 32, 20, 3, base_seed=9):
        A = KSparse(32, 3)
        y = G @ x0
        cfg = SolverConfig(0.6, max_iterations=200)
        a = pgd_solve(least_squares_objective(G, y), A, cfg).iterates()
        b = niht_solve(y, MeasurementModel(G), A, cfg).iterates()
        n = min(len(a), len(b))
        worst = max(worst, float(np.max(np.abs(a[:n] - b[:n]))))
    ok = worst <= 1e-12
    report(9, ok, f"max coordinate gap {worst:.3g} (<= 1e-12)")
    assert ok


def test_c10_nonconvexity_witness(report):
    A = KSparse(1, 1)
    sine = convexity_counterexample(MeasurementModel([[1.0]], ScaledSine(0.5)), A, seed=10, trials=1000)
    affine = convexity_counterexample(MeasurementModel([[1.0]], Identity()), A, seed=10, trials=1000)
    witness_ok = False
    if sine.found:
        f = lambda x: float(np.sum((sine.y - (x + 0.5 * np.sin(x))) ** 2))
        witness_ok = 0.5 * (f(sine.x1) + f(sine.x2)) - f(0.5 * (sine.x1 + sine.x2)) < 0
    ok = sine.found and witness_ok and not affine.found
    report(10, ok, f"sine witness after {sine.trials_used} trials (verified: {witness_ok}); "
                   f"identity found={affine.found}")
    assert ok


def test_c11_determinism(linear_sweep, report, tmp_path):
    (_, first_csv, _), rerun = linear_sweep
    _, second_csv, _ = rerun()
    (tmp_path / "a.csv").write_text(first_csv)
    (tmp_path / "b.csv").write_text(second_csv)
    ok = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    report(11, ok, f"rerun CSV byte-identical: {ok} ({len(first_csv)} bytes)")
    assert ok
