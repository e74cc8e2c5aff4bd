"""Reduced saddle system: roots, eliminations, lifts, and stationarity."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from replica_es import (
    OrderParams,
    ProblemParams,
    eliminate_conjugates,
    free_energy_value,
    full_residuals,
    gaussian_averages,
    observables,
    reduced_residuals,
    solve_reduced,
    wstar,
)
from replica_es.errors import DomainError, InfeasibleLift, InfeasibleRegion
from replica_es.saddle import RESIDUAL_TOL

#  points where the scalar elimination oracle is trustworthy (its implied
#  upper tail argument stays below the survival-function saturation)
ETA0_ORACLE_POINTS = [
    (0.7, 0.1),
    (0.9, 0.3),
    (0.975, 0.0139),
    (0.6, 0.05),
    (0.8, 0.25),
]

CROSS_PATH_POINTS = [
    (0.7, 0.1, 0.0),
    (0.9, 0.3, 0.0),
    (0.975, 1.0, 0.05),
    (0.8, 0.5, 0.2),
    (0.65, 0.08, 0.01),
    (0.95, 1.5, 0.4),
]


def lifted(alpha, r, eta):
    p = ProblemParams(alpha, r, eta)
    sol = solve_reduced(p)
    return eliminate_conjugates(sol.q0, sol.delta, sol.epsilon, p), sol, p


class TestAgainstScalarElimination:
    @pytest.mark.parametrize("alpha,r", ETA0_ORACLE_POINTS)
    def test_unregularized_root_matches_oracle(self, alpha, r):
        ref = oracles.eta0_saddle(alpha, r)
        assert ref is not None
        assert oracles.eta0_upper_arg(alpha, r) <= 8.0
        q0_ref, delta_ref, eps_ref = ref
        sol = solve_reduced(ProblemParams(alpha, r, 0.0))
        assert sol.q0 == pytest.approx(q0_ref, rel=1e-9)
        assert sol.delta == pytest.approx(delta_ref, rel=1e-9)
        assert sol.epsilon == pytest.approx(eps_ref, rel=1e-9, abs=1e-12)

    def test_oracle_sweep_where_valid(self):
        # wherever the elimination applies, the full solver must agree
        checked = 0
        for alpha in (0.6, 0.75, 0.9):
            for r in (0.02, 0.1, 0.3):
                ref = oracles.eta0_saddle(alpha, r)
                if ref is None or oracles.eta0_upper_arg(alpha, r) > 8.0:
                    continue
                sol = solve_reduced(ProblemParams(alpha, r, 0.0))
                assert sol.q0 == pytest.approx(ref[0], rel=1e-9)
                checked += 1
        assert checked >= 5


class TestHighPrecisionResiduals:
    @pytest.mark.parametrize("alpha,r,eta", CROSS_PATH_POINTS)
    def test_root_satisfies_40_digit_equations(self, alpha, r, eta):
        sol = solve_reduced(ProblemParams(alpha, r, eta))
        s = math.sqrt(sol.q0)
        u, v, t = (sol.delta + sol.epsilon) / s, sol.epsilon / s, math.log(sol.q0)
        f1, f2, f3 = oracles.reduced_f_mp(u, v, t, alpha, r, eta)
        duv = u - v
        e1 = abs(float(f1))
        e2 = abs(float(f2)) / duv
        e3 = abs(float(f3)) / (r * duv * duv)
        assert max(e1, e2, e3) <= 1e-9


class TestSolveContract:
    @pytest.mark.parametrize("alpha,r,eta", CROSS_PATH_POINTS)
    def test_residual_norm_within_contract(self, alpha, r, eta):
        sol = solve_reduced(ProblemParams(alpha, r, eta))
        assert sol.residual_norm <= RESIDUAL_TOL
        res = reduced_residuals(sol.q0, sol.delta, sol.epsilon, sol.params)
        assert res.max_abs() <= 10.0 * RESIDUAL_TOL

    def test_deterministic(self):
        a = solve_reduced(ProblemParams(0.9, 0.3, 0.05))
        b = solve_reduced(ProblemParams(0.9, 0.3, 0.05))
        assert (a.q0, a.delta, a.epsilon, a.residual_norm) == (
            b.q0, b.delta, b.epsilon, b.residual_norm)

    def test_warm_start_lands_on_same_root(self):
        p = ProblemParams(0.9, 0.3, 0.05)
        cold = solve_reduced(p)
        warm = solve_reduced(p, init=(cold.q0 * 1.3, cold.delta * 0.8,
                                      cold.epsilon + 0.1))
        assert warm.q0 == pytest.approx(cold.q0, rel=1e-9)

    def test_derived_fields_consistent(self):
        sol = solve_reduced(ProblemParams(0.975, 1.0, 0.05))
        assert sol.rel_error == pytest.approx(math.sqrt(sol.q0) - 1.0, abs=1e-15)
        assert sol.es_in_sample == pytest.approx(
            sol.params.r * sol.free_energy / (1.0 - sol.params.alpha), rel=1e-14)
        obs = observables(sol)
        assert obs.susceptibility == sol.delta
        assert obs.var_in == sol.epsilon
        assert obs.es_in == sol.es_in_sample

    def test_solution_fields_finite_at_unit_aspect_ratio(self):
        sol = solve_reduced(ProblemParams(0.975, 1.0, 0.05))
        for val in (sol.q0, sol.delta, sol.epsilon, sol.free_energy,
                    sol.es_in_sample):
            assert math.isfinite(val)
        assert sol.q0 >= 1.0
        assert sol.delta > 0.0


class TestInfeasibleRegion:
    @pytest.mark.parametrize("alpha,r", [(0.975, 0.6), (0.85, 1.0), (0.9, 2.0)])
    def test_unregularized_overload_raises(self, alpha, r):
        with pytest.raises(InfeasibleRegion):
            solve_reduced(ProblemParams(alpha, r, 0.0))

    @pytest.mark.parametrize("alpha,r", [(0.975, 0.6), (0.85, 1.0)])
    def test_any_regularization_restores_a_saddle(self, alpha, r):
        sol = solve_reduced(ProblemParams(alpha, r, 0.01))
        assert math.isfinite(sol.q0)


class TestValidation:
    @pytest.mark.parametrize("kwargs", [
        dict(alpha=0.0, r=0.1, eta=0.0),
        dict(alpha=1.0, r=0.1, eta=0.0),
        dict(alpha=0.9, r=0.0, eta=0.0),
        dict(alpha=0.9, r=-1.0, eta=0.0),
        dict(alpha=0.9, r=0.1, eta=-0.01),
    ])
    def test_bad_params_rejected(self, kwargs):
        with pytest.raises(DomainError):
            ProblemParams(**kwargs)

    def test_bad_warm_start_rejected(self):
        with pytest.raises(DomainError):
            solve_reduced(ProblemParams(0.9, 0.3, 0.0), init=(1.5, -0.1, 0.0))


class TestEliminations:
    def test_closed_forms_are_exact(self):
        p = ProblemParams(0.9, 0.3, 0.05)
        op = eliminate_conjugates(2.0, 0.5, 1.1, p)
        assert op.lambda_ == 1.0 / 0.5
        assert op.delta_hat == 1.0 / (2.0 * 0.5) - 0.05
        assert op.q0_hat == -(2.0 - 1.0) / (2.0 * 0.5 * 0.5)
        assert op.epsilon == 1.1

    def test_roundoff_deficit_clamped(self):
        p = ProblemParams(0.9, 0.3, 0.0)
        op = eliminate_conjugates(1.0 - 1e-12, 0.5, 1.1, p)
        assert op.q0 == 1.0
        assert op.q0_hat == 0.0

    def test_sub_unit_q0_rejected(self):
        p = ProblemParams(0.9, 0.3, 0.0)
        with pytest.raises(InfeasibleLift):
            eliminate_conjugates(0.9, 0.5, 1.1, p)

    def test_nonpositive_delta_rejected(self):
        p = ProblemParams(0.9, 0.3, 0.0)
        with pytest.raises(DomainError):
            eliminate_conjugates(2.0, 0.0, 1.1, p)


class TestLiftedResiduals:
    """Dual route: quadrature equations vs the closed-form reduced root."""

    @pytest.mark.parametrize("alpha,r,eta", CROSS_PATH_POINTS)
    def test_full_system_satisfied_at_lift(self, alpha, r, eta):
        op, _, p = lifted(alpha, r, eta)
        res = full_residuals(op, p)
        assert np.abs(res).max() <= 1e-8

    @given(
        st.floats(min_value=0.6, max_value=0.99),
        st.floats(min_value=0.05, max_value=2.0),
        st.floats(min_value=1e-3, max_value=0.5),
    )
    @settings(max_examples=12, deadline=None)
    def test_full_system_satisfied_on_random_draws(self, alpha, r, eta):
        op, _, p = lifted(alpha, r, eta)
        res = full_residuals(op, p)
        assert np.abs(res).max() <= 1e-8


class TestFreeEnergy:
    def test_quadrature_route_matches_closed_form(self):
        # functional value (penalty included) against the reduced closed form
        for alpha, r, eta in CROSS_PATH_POINTS:
            op, sol, p = lifted(alpha, r, eta)
            assert free_energy_value(op, p) == pytest.approx(
                sol.free_energy + eta * sol.q0, rel=1e-9, abs=1e-11)

    @pytest.mark.parametrize("alpha,r,eta", [
        (0.9, 0.3, 0.05), (0.975, 1.0, 0.05), (0.7, 0.1, 0.0)])
    def test_stationary_in_every_order_parameter(self, alpha, r, eta):
        op, _, p = lifted(alpha, r, eta)
        for name in ("lambda_", "epsilon", "q0", "delta", "q0_hat", "delta_hat"):
            val = getattr(op, name)
            h = 1e-6 * max(1.0, abs(val))
            hi = dataclasses.replace(op, **{name: val + h})
            lo = dataclasses.replace(op, **{name: val - h})
            grad = (free_energy_value(hi, p) - free_energy_value(lo, p)) / (2 * h)
            assert abs(grad) <= 1e-6, f"gradient in {name} is {grad}"


class TestMonotonicity:
    @pytest.mark.parametrize("alpha,r", [(0.9, 0.3), (0.975, 0.45)])
    def test_q0_nonincreasing_in_regularizer(self, alpha, r):
        etas = (0.0, 0.01, 0.05, 0.2, 1.0)
        q = [solve_reduced(ProblemParams(alpha, r, e)).q0 for e in etas]
        for a, b in zip(q[:-1], q[1:]):
            assert b <= a + 1e-12


class TestResidualScale:
    def test_first_equation_affine_in_regularizer(self):
        # fixed (q0, delta, epsilon): e1 moves linearly with slope -2 r delta
        q0, delta, eps = 2.0, 0.7, 1.1
        r = 0.3
        e_a = reduced_residuals(q0, delta, eps, ProblemParams(0.9, r, 0.0))
        e_b = reduced_residuals(q0, delta, eps, ProblemParams(0.9, r, 0.2))
        slope = (e_b.e1 - e_a.e1) / 0.2
        assert slope == pytest.approx(-2.0 * r * delta, rel=1e-12)
        assert e_b.e2 == e_a.e2


class TestScalarPotential:
    def test_minimizer_matches_brute_force(self):
        op = OrderParams(lambda_=2.0, epsilon=1.0, q0=2.0, delta=0.5,
                         q0_hat=-2.0, delta_hat=0.9)
        # golden-section localization of a quadratic is sqrt(eps)-limited
        for z in (-1.5, 0.0, 0.8, 3.0):
            w = wstar(z, op, eta=0.1)
            ref = oracles.potential_argmin(2.0, -2.0, 0.9, 0.1, z)
            assert w == pytest.approx(ref, abs=1e-6)

    def test_moments_match_quadrature(self):
        op = OrderParams(lambda_=2.0, epsilon=1.0, q0=2.0, delta=0.5,
                         q0_hat=-2.0, delta_hat=0.9)
        eta = 0.1
        nodes, weights = np.polynomial.hermite_e.hermegauss(64)
        norm = math.sqrt(2.0 * math.pi)
        w_vals = np.array([wstar(z, op, eta) for z in nodes])
        mean_w, mean_wz, mean_w2 = gaussian_averages(op, eta)
        assert mean_w == pytest.approx(weights @ w_vals / norm, rel=1e-12)
        assert mean_wz == pytest.approx(weights @ (w_vals * nodes) / norm, rel=1e-12)
        assert mean_w2 == pytest.approx(weights @ w_vals**2 / norm, rel=1e-12)
