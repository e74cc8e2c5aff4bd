"""Special-function kernels: branch structure, derivative chain, ranges."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from replica_es import g, g_prime, phi, psi, w_fn
from replica_es.backend import kernels
from replica_es.errors import DomainError
from replica_es import _kernels_py

KNOTS = (-1.0, 0.0)

finite_floats = st.floats(min_value=-1e6, max_value=1e6,
                          allow_nan=False, allow_infinity=False)


def central_diff(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


class TestBranchStructure:
    def test_matches_direct_piecewise_evaluation(self):
        for x in np.linspace(-4.0, 2.0, 601):
            assert g(float(x)) == oracles.g_direct(float(x))
            assert g_prime(float(x)) == oracles.g_prime_direct(float(x))

    #  the 1e-15 term absorbs subtraction roundoff near g = 1, which
    #  outgrows the exact 4 delta envelope once delta drops below ~1e-9
    @pytest.mark.parametrize("knot", KNOTS)
    @pytest.mark.parametrize("delta", [1e-6, 1e-8, 1e-10, 1e-12])
    def test_g_continuous_at_knots(self, knot, delta):
        assert abs(g(knot - delta) - g(knot + delta)) <= 4.0 * delta + 1e-15

    @pytest.mark.parametrize("knot", KNOTS)
    @pytest.mark.parametrize("delta", [1e-6, 1e-8, 1e-10, 1e-12])
    def test_g_prime_continuous_at_knots(self, knot, delta):
        assert abs(g_prime(knot - delta) - g_prime(knot + delta)) <= 4.0 * delta + 1e-15

    def test_g_prime_differentiates_g_away_from_knots(self):
        # knots excluded: the FD stencil must not straddle a kink
        for x in np.linspace(-5.0, 3.0, 401):
            x = float(x)
            if min(abs(x - k) for k in KNOTS) < 1e-3:
                continue
            assert abs(central_diff(g, x) - g_prime(x)) <= 1e-8


class TestDerivativeChain:
    def test_psi_prime_is_phi(self):
        for x in np.linspace(-6.0, 6.0, 241):
            assert abs(central_diff(psi, float(x)) - phi(float(x))) <= 1e-8

    def test_w_prime_is_psi(self):
        for x in np.linspace(-6.0, 6.0, 241):
            assert abs(central_diff(w_fn, float(x)) - psi(float(x))) <= 1e-8


class TestHighPrecisionAgreement:
    @pytest.mark.parametrize("x", [-20.0, -8.0, -3.0, -1.0, -0.3, 0.0, 0.4, 1.0, 5.0, 12.0])
    def test_phi_psi_w_match_mpmath(self, x):
        assert phi(x) == pytest.approx(float(oracles.phi_mp(x)), rel=1e-13, abs=1e-15)
        assert psi(x) == pytest.approx(float(oracles.psi_mp(x)), rel=1e-13, abs=1e-15)
        assert w_fn(x) == pytest.approx(float(oracles.w_mp(x)), rel=1e-13, abs=1e-15)

    def test_left_tail_keeps_relative_accuracy(self):
        # the erfc kernel must not cancel where 1 - cdf(-x) would
        for x in (-10.0, -15.0, -20.0):
            exact = float(oracles.phi_mp(x))
            assert phi(x) == pytest.approx(exact, rel=1e-12)


class TestRanges:
    @given(finite_floats)
    @settings(max_examples=300, deadline=None)
    def test_phi_in_unit_interval(self, x):
        assert 0.0 <= phi(x) <= 1.0

    @given(finite_floats)
    @settings(max_examples=300, deadline=None)
    def test_psi_dominates_hinge(self, x):
        val = psi(x)
        assert val >= 0.0
        assert val >= max(0.0, x)

    @given(finite_floats)
    @settings(max_examples=300, deadline=None)
    def test_w_nonnegative(self, x):
        assert w_fn(x) >= 0.0

    @given(finite_floats, finite_floats)
    @settings(max_examples=300, deadline=None)
    def test_phi_and_psi_nondecreasing(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert phi(hi) >= phi(lo)
        assert psi(hi) >= psi(lo) - 1e-15
        assert w_fn(hi) >= w_fn(lo) - 1e-15


class TestTailCut:
    def test_hard_zero_below_cut(self):
        assert psi(-26.0) == 0.0
        assert w_fn(-26.0) == 0.0

    def test_cut_is_below_representable_mass(self):
        # the function value just above the cut is already negligible
        assert psi(-25.0) < 1e-130
        assert w_fn(-25.0) < 1e-130


class TestValidation:
    @pytest.mark.parametrize("fn", [phi, psi, w_fn, g, g_prime])
    def test_nan_rejected(self, fn):
        with pytest.raises(DomainError):
            fn(float("nan"))


class TestBackendParity:
    """The compiled extension and the pure twin must agree everywhere."""

    def test_grid_agreement(self):
        if kernels is _kernels_py:
            pytest.skip("compiled extension not active")
        for x in np.linspace(-30.0, 10.0, 801):
            x = float(x)
            assert math.isclose(kernels.phi(x), _kernels_py.phi(x),
                                rel_tol=5e-16, abs_tol=1e-300)
            assert math.isclose(kernels.psi(x), _kernels_py.psi(x),
                                rel_tol=5e-16, abs_tol=1e-300)
            assert math.isclose(kernels.w_fn(x), _kernels_py.w_fn(x),
                                rel_tol=5e-16, abs_tol=1e-300)
            assert kernels.g(x) == _kernels_py.g(x)
            assert kernels.g_prime(x) == _kernels_py.g_prime(x)
