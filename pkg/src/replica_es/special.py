"""Scalar special functions used throughout the saddle-point equations.

All functions take and return Python floats and are stateless; there are
no array entry points here, callers loop.  The heavy lifting is delegated
to the selected kernel backend so the compiled and pure-Python paths share
one definition of each function.
"""

import math

from .backend import kernels
from .errors import DomainError

__all__ = ["g", "g_prime", "phi", "psi", "w_fn"]


def _checked(x):
    x = float(x)
    if math.isnan(x):
        raise DomainError("argument is NaN")
    return x


def g(x):
    """Piecewise potential: 0 for x >= 0, x^2 on [-1, 0], -2x - 1 for x < -1.

    Continuous with continuous first derivative at both knots; the middle
    branch owns the knots, so ties resolve to it.
    """
    return kernels.g(_checked(x))


def g_prime(x):
    """Derivative of :func:`g`: 0, 2x, or -2 on the same branches."""
    return kernels.g_prime(_checked(x))


def phi(x):
    """Standard normal cumulative distribution function.

    Evaluated through the complementary error function so the left tail
    keeps full relative accuracy (better than 1e-12 for |x| <= 8) instead
    of cancelling against 1.
    """
    return kernels.phi(_checked(x))


def psi(x):
    """x * phi(x) + normal density at x.

    Antiderivative of phi: psi' = phi.  Nonnegative everywhere, equals
    max(0, x) up to exponentially small corrections for large |x|, and is
    hard-zeroed below x = -25 where the true value is under 1e-136.
    """
    return kernels.psi(_checked(x))


def w_fn(x):
    """((x^2 + 1) / 2) * phi(x) + (x / 2) * normal density at x.

    Antiderivative of psi: w_fn' = psi.  Nonnegative, and hard-zeroed
    below x = -25 like psi.
    """
    return kernels.w_fn(_checked(x))
