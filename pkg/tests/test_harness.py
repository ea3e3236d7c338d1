import itertools
import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from nliht.constraints import KSparse
from nliht.errors import InvalidInput
from nliht.harness import (
    SWEEP_COLUMNS,
    ProblemSpec,
    exhaustive_oracle,
    generate_problem,
    load_matrix,
    residual_norm,
    run_sweep,
    run_trial,
    save_matrix,
    sweep_csv,
    trial_seed,
)
from nliht.operators import MeasurementModel
from nliht.solvers import SolverConfig, niht_solve


class TestGenerate:
    def test_noiseless(self):
        p = generate_problem(ProblemSpec(16, 8, 3, seed=1))
        np.testing.assert_array_equal(p.y, p.model.forward(p.x0))

    def test_repeatable(self):
        spec = ProblemSpec(16, 8, 3, nonlinearity="sine", h_scale=0.1, noise_sigma=0.1, seed=2)
        a, b = generate_problem(spec), generate_problem(spec)
        np.testing.assert_array_equal(a.model.matrix, b.model.matrix)
        np.testing.assert_array_equal(a.x0, b.x0)
        np.testing.assert_array_equal(a.y, b.y)

    def test_unit_norm_support(self):
        p = generate_problem(ProblemSpec(8, 6, 2, seed=7))
        assert abs(np.linalg.norm(p.x0) - 1) < 1e-12
        assert np.count_nonzero(p.x0) == 2

    def test_noise_scaling(self):
        a = generate_problem(ProblemSpec(10, 6, 2, noise_sigma=0.1, seed=3))
        b = generate_problem(ProblemSpec(10, 6, 2, noise_sigma=0.2, seed=3))
        assert np.linalg.norm(b.noise) == 2 * np.linalg.norm(a.noise)
        np.testing.assert_array_equal(a.x0, b.x0)

    def test_spec_validation(self):
        with pytest.raises(InvalidInput):
            ProblemSpec(4, 4, 5)
        with pytest.raises(InvalidInput):
            ProblemSpec(4, 3, 1, ensemble="identity")
        with pytest.raises(InvalidInput):
            ProblemSpec(4, 3, 1, noise_sigma=-1)


class TestMatrixFile:
    def test_round_trip(self, tmp_path):
        G = np.random.default_rng(0).standard_normal((3, 5))
        save_matrix(tmp_path / "g.txt", G)
        np.testing.assert_array_equal(load_matrix(tmp_path / "g.txt"), G)
        spec = ProblemSpec(5, 3, 1, ensemble="file", matrix_file=str(tmp_path / "g.txt"))
        np.testing.assert_array_equal(generate_problem(spec).model.matrix, G)

    @pytest.mark.parametrize("text, where", [
        ("2 2\n1 2\n", "rows"),
        ("2 x\n1 2\n3 4\n", ":1:"),
        ("2 2\n1 2\n3\n", ":3:"),
        ("2 2\n1 2\n3 y\n", ":3:"),
    ])
    def test_malformed(self, tmp_path, text, where):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(InvalidInput, match=where):
            load_matrix(path)

    def test_missing(self, tmp_path):
        with pytest.raises(InvalidInput):
            load_matrix(tmp_path / "absent.txt")


class TestOracle:
    def test_linear_exact(self):
        rng = np.random.default_rng(0)
        G = rng.standard_normal((8, 8)) + 3 * np.eye(8)
        x0 = np.zeros(8)
        x0[[1, 5]] = [0.6, -0.8]
        x = exhaustive_oracle(G @ x0, MeasurementModel(G), 2)
        np.testing.assert_allclose(x, x0, atol=1e-10)

    def test_full_support_nests(self):
        rng = np.random.default_rng(1)
        model = MeasurementModel(rng.standard_normal((5, 4)), None)
        y = rng.standard_normal(5)
        full = residual_norm(y, model, exhaustive_oracle(y, model, 4))
        for k in (1, 2, 3):
            assert full <= residual_norm(y, model, exhaustive_oracle(y, model, k)) + 1e-12

    def test_dominates_solver(self):
        for seed in range(5):
            p = generate_problem(ProblemSpec(6, 5, 1, nonlinearity="sine", h_scale=0.1, seed=seed))
            x_or = exhaustive_oracle(p.y, p.model, 1)
            res = niht_solve(p.y, p.model, KSparse(6, 1), SolverConfig(0.5, max_iterations=2000))
            assert residual_norm(p.y, p.model, x_or) <= residual_norm(p.y, p.model, res.estimate) + 1e-9

    def test_matches_enumeration_of_restricted_minima(self):
        # independent check: a dense 1-D scan on each support for a scalar coefficient
        p = generate_problem(ProblemSpec(4, 3, 1, nonlinearity="sine", h_scale=0.3, seed=4))
        x_or = exhaustive_oracle(p.y, p.model, 1)
        grid = np.linspace(-3, 3, 60001)
        best = math.inf
        for j in range(4):
            X = np.zeros((grid.size, 4))
            X[:, j] = grid
            R = p.y[None, :] - (X + 0.3 * np.sin(X)) @ p.model.matrix.T
            best = min(best, float(np.min(np.linalg.norm(R, axis=1))))
        assert residual_norm(p.y, p.model, x_or) <= best + 1e-9

    def test_budget(self):
        with pytest.raises(InvalidInput):
            exhaustive_oracle(np.zeros(3), MeasurementModel(np.ones((3, 40))), 10)


class TestTrials:
    def test_record(self):
        rec = run_trial(ProblemSpec(32, 20, 2, seed=0), rip_trials=200)
        assert rec.success == (rec.rel_error < 1e-4)
        assert rec.mu == pytest.approx(1 / rec.beta_hat)
        assert "wall_time" not in rec.to_record()

    def test_enforced_condition_skips(self):
        rec = run_trial(ProblemSpec(32, 20, 2, seed=0), mu=10.0, rip_trials=200,
                        enforce_step_condition=True)
        assert rec.skip_reason.startswith("Infeasible")

    def test_bound_reported(self):
        rec = run_trial(ProblemSpec(16, 800, 1, nonlinearity="sine", h_scale=0.01, seed=0),
                        rip_trials=2000, report_bound=True, enforce_step_condition=True)
        assert rec.skip_reason == ""
        assert rec.bound == 0.0


class TestSweep:
    def test_single_cell(self):
        rows = run_sweep(ProblemSpec(16, 10, 2), trials_per_cell=1, base_seed=0, rip_trials=100)
        assert len(rows) == 1
        text = sweep_csv(rows)
        lines = text.splitlines()
        assert lines[0] == ",".join(SWEEP_COLUMNS) and len(lines) == 2

    def test_row_count_and_order(self):
        rows = run_sweep(ProblemSpec(16, 10, 2), Ms=[8, 12], ks=[1, 2, 3], trials_per_cell=2,
                         rip_trials=50)
        assert [(r.M, r.k) for r in rows] == list(itertools.product([8, 12], [1, 2, 3]))
        assert [r.cell_id for r in rows] == list(range(6))

    def test_rerun_identical(self, tmp_path):
        kwargs = dict(ks=[2, 4], trials_per_cell=3, base_seed=9, rip_trials=100)
        a = sweep_csv(run_sweep(ProblemSpec(24, 16, 2), **kwargs), tmp_path / "a.csv")
        b = sweep_csv(run_sweep(ProblemSpec(24, 16, 2), jobs=2, **kwargs), tmp_path / "b.csv")
        assert a == b
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_cell_replay(self):
        rows = run_sweep(ProblemSpec(24, 16, 2), ks=[2, 3], trials_per_cell=3, base_seed=4,
                         rip_trials=100)
        base = ProblemSpec(24, 16, 3)
        replay = [run_trial(ProblemSpec(24, 16, 3, seed=trial_seed(4, 1, t)), rip_trials=100)
                  for t in range(3)]
        assert [r.to_record() for r in rows[1].records] == [r.to_record() for r in replay]
        other = run_sweep(base, trials_per_cell=3, base_seed=5, rip_trials=100)
        assert [r.seed for r in other[0].records] != [r.seed for r in rows[1].records]

    def test_skipped_cell(self):
        rows = run_sweep(ProblemSpec(32, 16, 4), trials_per_cell=2, rip_trials=100,
                         enforce_step_condition=True)
        assert rows[0].skip_reason.startswith("Skipped")
        assert math.isnan(rows[0].success_rate)

    def test_validation(self):
        with pytest.raises(InvalidInput):
            run_sweep(ProblemSpec(8, 6, 2), ks=[])
        with pytest.raises(InvalidInput):
            run_sweep(ProblemSpec(8, 6, 2), trials_per_cell=0)


def permutation_p_value(x, y, rounds, rng):
    """One-sided p-value for a negative rank correlation, by label shuffling."""
    def rank_corr(a, b):
        ra = np.argsort(np.argsort(a, kind="stable"), kind="stable").astype(float)
        rb = np.argsort(np.argsort(b, kind="stable"), kind="stable").astype(float)
        return np.corrcoef(ra, rb)[0, 1]

    observed = rank_corr(x, y)
    hits = sum(rank_corr(x, rng.permutation(y)) <= observed for _ in range(rounds))
    return observed, (hits + 1) / (rounds + 1)


def test_phase_transition_monotone():
    ks = list(range(2, 21))
    rows = run_sweep(ProblemSpec(64, 48, 2), ks=ks, trials_per_cell=50, base_seed=1,
                     rip_trials=200, max_iterations=500, jobs=4)
    success = np.array([r.success_rate for r in rows])
    rho, _ = spearmanr(ks, success)
    observed, p = permutation_p_value(np.array(ks), success, 2000, np.random.default_rng(0))
    print(f"spearman rho={rho:.3f} (permutation oracle {observed:.3f}, p={p:.4f})")
    assert rho <= 0
    assert p < 0.01
