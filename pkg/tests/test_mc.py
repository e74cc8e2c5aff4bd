"""Finite-sample programs and estimators against independent references."""

import math
import time

import mpmath
import numpy as np
import pytest

import oracles
from replica_es import (
    MCConfig,
    ProblemParams,
    es_out_analytic,
    es_unit,
    estimate_summary,
    estimate_susceptibility,
    sample_instance,
    solve_program,
    solve_reduced,
)
from replica_es.errors import (
    AllUnbounded,
    DomainError,
    ShiftTooLarge,
    Unbounded,
)
from replica_es.mc import active_scenarios


class TestSampling:
    def test_moments_within_clt_bounds(self):
        cfg = MCConfig(n_assets=100, n_obs=1000, alpha=0.9, eta=0.0,
                       n_samples=1, seed=2024)
        X = sample_instance(cfg, 0)
        n = X.size
        assert X.shape == (100, 1000)
        assert abs(X.mean()) <= 4.0 / math.sqrt(n)
        assert abs(X.var() - 1.0) <= 4.0 * math.sqrt(2.0 / n)

    def test_replications_reproducible_in_any_order(self):
        cfg = MCConfig(n_assets=20, n_obs=50, alpha=0.9, eta=0.0,
                       n_samples=10, seed=99)
        a = sample_instance(cfg, 7)
        b = sample_instance(cfg, 7)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample_instance(cfg, 8))
        #  a different seed moves every replication
        other = MCConfig(n_assets=20, n_obs=50, alpha=0.9, eta=0.0,
                         n_samples=10, seed=100)
        assert not np.array_equal(a, sample_instance(other, 7))


@pytest.fixture(scope="module")
def solved_instances():
    rng = np.random.default_rng(314)
    out = []
    for alpha, eta, (N, T) in [
        (0.9, 0.05, (50, 300)),
        (0.8, 0.2, (30, 200)),
        (0.7, 0.0, (40, 400)),
    ]:
        X = rng.standard_normal((N, T))
        out.append((X, alpha, eta, solve_program(X, alpha, eta)))
    return out


class TestProgramInvariants:
    def test_budget_constraint(self, solved_instances):
        for _, _, _, inst in solved_instances:
            N = inst.weights.size
            assert abs(inst.weights.sum() - N) <= 1e-10 * N

    def test_feasibility(self, solved_instances):
        for X, _, _, inst in solved_instances:
            N = X.shape[0]
            margins = (X / math.sqrt(N)).T @ inst.weights + inst.eps_star
            assert inst.slacks.min() >= 0.0
            assert (margins + inst.slacks).min() >= -1e-8

    def test_complementary_slackness(self, solved_instances):
        #  the slack equals the hinge of the margin at an exact optimum
        for X, _, _, inst in solved_instances:
            N = X.shape[0]
            margins = (X / math.sqrt(N)).T @ inst.weights + inst.eps_star
            gap = np.abs(inst.slacks - np.maximum(-margins, 0.0))
            assert gap.max() <= 1e-6

    def test_duality_gap_certified(self, solved_instances):
        for _, _, _, inst in solved_instances:
            assert inst.duality_gap <= 1e-8 * (1.0 + abs(inst.objective))

    def test_objective_recomputes_from_parts(self, solved_instances):
        for X, alpha, eta, inst in solved_instances:
            T = X.shape[1]
            val = (eta * (inst.weights @ inst.weights)
                   + (1.0 - alpha) * T * inst.eps_star + inst.slacks.sum())
            assert val == pytest.approx(inst.objective, rel=1e-8, abs=1e-8)

    def test_objective_matches_exact_threshold_scan(self, solved_instances):
        for X, alpha, eta, inst in solved_instances:
            ref = oracles.shortfall_objective(X, alpha, eta, inst.weights)
            assert abs(ref - inst.objective) <= 1e-8 * (1.0 + abs(inst.objective))

    def test_active_scenarios_carry_the_shortfall(self, solved_instances):
        for X, alpha, _, inst in solved_instances:
            active = active_scenarios(inst)
            T = X.shape[1]
            #  at least the shortfall share of scenarios binds at an optimum
            assert len(active) >= math.floor((1.0 - alpha) * T)
            present = set(np.flatnonzero(inst.slacks > 1e-7))
            assert present <= active


class TestPerturbationOptimality:
    def test_budget_preserving_moves_never_improve(self, solved_instances):
        rng = np.random.default_rng(555)
        for X, alpha, eta, inst in solved_instances[:2]:
            N = X.shape[0]
            for scale in (1e-3, 1e-1):
                for _ in range(20):
                    d = rng.standard_normal(N)
                    d -= d.mean()  # stay on the budget hyperplane
                    w = inst.weights + scale * d
                    val = oracles.shortfall_objective(X, alpha, eta, w)
                    assert val >= inst.objective - 1e-9


class TestAgainstEnumeration:
    @pytest.mark.parametrize("trial", range(3))
    def test_small_program_matches_active_set_search(self, trial):
        rng = np.random.default_rng(42 + trial)
        X = rng.standard_normal((3, 8))
        w_ref, _, obj_ref = oracles.active_set_solve(X, 0.6, 0.1)
        for method in ("auto", "splitting"):
            inst = solve_program(X, 0.6, 0.1, method=method)
            assert abs(inst.objective - obj_ref) <= 1e-6
            assert np.abs(inst.weights - w_ref).max() <= 1e-6


class TestDegenerateCases:
    def test_single_asset_forced_to_budget(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((1, 12))
        inst = solve_program(X, 0.8, 0.1)
        assert inst.weights == pytest.approx([1.0], abs=1e-10)
        ref = oracles.shortfall_objective(X, 0.8, 0.1, np.array([1.0]))
        assert inst.objective == pytest.approx(ref, rel=1e-9, abs=1e-9)

    def test_heavy_regularization_pulls_weights_uniform(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((10, 50))
        inst = solve_program(X, 0.9, 1e3)
        assert np.abs(inst.weights - 1.0).max() <= 1e-2


class TestSolverRoutes:
    def test_interior_point_and_splitting_agree(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((60, 400))
        a = solve_program(X, 0.9, 0.05, method="interior-point")
        b = solve_program(X, 0.9, 0.05, method="splitting")
        assert abs(a.objective - b.objective) <= 1e-6 * (1.0 + abs(a.objective))
        assert np.abs(a.weights - b.weights).max() <= 1e-5
        assert a.budget_multiplier == pytest.approx(b.budget_multiplier, abs=1e-6)

    def test_linear_route_agrees_with_vanishing_ridge(self):
        #  the quadratic routes cannot reach eta = 0, so check the linear
        #  route against the interior point at a ridge small enough to
        #  perturb the objective below the comparison tolerance
        rng = np.random.default_rng(8)
        X = rng.standard_normal((30, 300))
        a = solve_program(X, 0.9, 0.0)
        b = solve_program(X, 0.9, 1e-9, method="interior-point")
        assert abs(a.objective - b.objective) <= 1e-6 * (1.0 + abs(a.objective))

    def test_forced_routes_require_a_regularizer(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((10, 40))
        with pytest.raises(DomainError):
            solve_program(X, 0.9, 0.0, method="interior-point")
        with pytest.raises(DomainError):
            solve_program(X, 0.9, 0.0, method="splitting")

    def test_unknown_method_rejected(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((10, 40))
        with pytest.raises(DomainError):
            solve_program(X, 0.9, 0.05, method="simplex")


class TestUnboundedDetection:
    def test_overloaded_sample_detected_not_looped_on(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((50, 10))
        start = time.monotonic()
        with pytest.raises(Unbounded):
            solve_program(X, 0.9, 0.0)
        assert time.monotonic() - start < 30.0

    def test_all_replications_unbounded_raises(self):
        cfg = MCConfig(n_assets=60, n_obs=75, alpha=0.9, eta=0.0,
                       n_samples=3, seed=5)
        with pytest.raises(AllUnbounded):
            estimate_summary(cfg, susceptibility=False)

    def test_feasible_fraction_tracks_the_transition(self):
        #  alpha = 0.975 puts the breakdown near r = 0.48; the finite-N
        #  crossover is a sigmoid in r
        fracs = []
        for r in (0.3, 0.5, 0.7):
            cfg = MCConfig(n_assets=100, n_obs=int(round(100 / r)),
                           alpha=0.975, eta=0.0, n_samples=30, seed=11)
            try:
                s = estimate_summary(cfg, susceptibility=False)
                fracs.append(s.feasible_fraction)
                assert s.n_feasible == int(round(30 * s.feasible_fraction))
            except AllUnbounded:
                fracs.append(0.0)
        assert fracs[0] >= 0.9
        assert fracs[0] >= fracs[1] >= fracs[2]
        assert fracs[2] <= 0.1
        assert 0.0 < fracs[1] < 1.0


class TestSusceptibilityProbe:
    def test_violent_shift_rejected(self):
        cfg = MCConfig(n_assets=40, n_obs=200, alpha=0.9, eta=0.05,
                       n_samples=6, seed=77, shift_xi=5.0)
        with pytest.raises(ShiftTooLarge):
            estimate_susceptibility(cfg)

    @pytest.mark.slow
    def test_matches_replica_susceptibility(self):
        cfg = MCConfig(n_assets=200, n_obs=1000, alpha=0.9, eta=0.01,
                       n_samples=35, seed=2712)
        out = estimate_susceptibility(cfg)
        pred = solve_reduced(ProblemParams(0.9, 0.2, 0.01)).delta
        assert abs(out.value - pred) <= 3.0 * out.se

    @pytest.mark.slow
    def test_estimate_insensitive_to_probe_size(self):
        base = dict(n_assets=100, n_obs=500, alpha=0.9, eta=0.01,
                    n_samples=40, seed=1903)
        d1 = estimate_susceptibility(MCConfig(shift_xi=1e-3, **base))
        d2 = estimate_susceptibility(MCConfig(shift_xi=5e-4, **base))
        assert abs(d1.value - d2.value) <= 3.0 * math.hypot(d1.se, d2.se)

    def test_regularization_damps_the_response(self):
        base = dict(n_assets=100, n_obs=500, alpha=0.9, n_samples=20, seed=404)
        strong = estimate_susceptibility(MCConfig(eta=0.01, **base))
        weak = estimate_susceptibility(MCConfig(eta=0.3, **base))
        assert strong.value - weak.value >= 3.0 * math.hypot(strong.se, weak.se)


class TestEstimateSummary:
    @pytest.mark.slow
    def test_unregularized_estimates_match_theory(self):
        cfg = MCConfig(n_assets=200, n_obs=2000, alpha=0.7, eta=0.0,
                       n_samples=30, seed=606)
        s = estimate_summary(cfg, susceptibility=False)
        pred = solve_reduced(ProblemParams(0.7, 0.1, 0.0))
        assert s.feasible_fraction == 1.0
        for est, ref in [
            (s.q0_hat, pred.q0),
            (s.eps_hat, pred.epsilon),
            (s.es_in_hat, pred.es_in_sample),
        ]:
            assert abs(est.value - ref) <= 3.0 * est.se

    def test_deterministic_across_calls_and_workers(self):
        cfg = MCConfig(n_assets=30, n_obs=100, alpha=0.9, eta=0.05,
                       n_samples=6, seed=21)
        a = estimate_summary(cfg)
        b = estimate_summary(cfg)
        c = estimate_summary(cfg, workers=2)
        for s in (b, c):
            assert s.q0_hat == a.q0_hat
            assert s.eps_hat == a.eps_hat
            assert s.es_in_hat == a.es_in_hat
            assert s.delta_hat == a.delta_hat
            assert s.feasible_fraction == a.feasible_fraction

    @pytest.mark.slow
    def test_estimates_tighten_with_system_size(self):
        #  fixed r = 0.25: the finite-size bias shrinks as N grows
        pred = solve_reduced(ProblemParams(0.9, 0.25, 0.01)).q0
        errs = []
        ses = []
        for N, reps in ((50, 40), (100, 30), (200, 20), (400, 12)):
            cfg = MCConfig(n_assets=N, n_obs=4 * N, alpha=0.9, eta=0.01,
                           n_samples=reps, seed=808)
            s = estimate_summary(cfg, susceptibility=False)
            errs.append(abs(s.q0_hat.value - pred))
            ses.append(s.q0_hat.se)
        for i in range(len(errs) - 1):
            assert errs[i + 1] <= errs[i] + 2.0 * (ses[i] + ses[i + 1])


class TestAnalyticOutOfSample:
    def test_unit_tail_expectation_matches_quadrature(self):
        for alpha in (0.7, 0.9, 0.975):
            z = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(alpha) - 1))
            ref = float(
                mpmath.quad(
                    lambda x: x * mpmath.exp(-x * x / 2) / mpmath.sqrt(2 * mpmath.pi),
                    [z, mpmath.inf],
                )
            ) / (1.0 - alpha)
            assert es_unit(alpha) == pytest.approx(ref, rel=1e-12)

    def test_portfolio_value_scales_with_weight_norm(self):
        rng = np.random.default_rng(99)
        w = rng.standard_normal(50) + 2.0
        val = es_out_analytic(w, 0.9)
        assert val == pytest.approx(
            math.sqrt((w @ w) / 50) * es_unit(0.9), rel=1e-14)


class TestValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(n_assets=1, n_obs=50, alpha=0.9, eta=0.0, n_samples=5, seed=1),
        dict(n_assets=10, n_obs=1, alpha=0.9, eta=0.0, n_samples=5, seed=1),
        dict(n_assets=10, n_obs=50, alpha=0.0, eta=0.0, n_samples=5, seed=1),
        dict(n_assets=10, n_obs=50, alpha=1.0, eta=0.0, n_samples=5, seed=1),
        dict(n_assets=10, n_obs=50, alpha=0.9, eta=-0.1, n_samples=5, seed=1),
        dict(n_assets=10, n_obs=50, alpha=0.9, eta=0.0, n_samples=0, seed=1),
        dict(n_assets=10, n_obs=50, alpha=0.9, eta=0.0, n_samples=5, seed=1,
             shift_xi=0.0),
    ])
    def test_bad_config_rejected(self, kwargs):
        with pytest.raises(DomainError):
            MCConfig(**kwargs)

    def test_bad_program_inputs_rejected(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((5, 20))
        with pytest.raises(DomainError):
            solve_program(X[0], 0.9, 0.0)
        with pytest.raises(DomainError):
            solve_program(X, 1.5, 0.0)
        with pytest.raises(DomainError):
            solve_program(X, 0.9, -1.0)
        bad = X.copy()
        bad[2, 3] = math.nan
        with pytest.raises(DomainError):
            solve_program(bad, 0.9, 0.0)
