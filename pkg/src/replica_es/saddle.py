"""Saddle-point system for the regularized Expected Shortfall portfolio problem.

Exposes the six-variable stationarity system, its reduction to three
equations in (q0, delta, epsilon), a damped-Newton solver for the reduced
system, and the maps from order parameters to financial observables.

The reduced equations are solved in transformed coordinates
(u, v, t) = ((delta + epsilon)/sqrt(q0), epsilon/sqrt(q0), log q0),
where the two tail arguments u and v enter the special functions directly.
These coordinates stay well conditioned even when the tail arguments are
far in the saturated region, which happens for confidence levels close
to 1.
"""

import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import root as _scipy_root
from scipy.special import ndtri

from .backend import kernels
from .errors import (
    DomainError,
    InfeasibleLift,
    InfeasibleRegion,
    NoConvergence,
    NonConvexPotential,
    QuadratureFailure,
)

__all__ = [
    "ProblemParams",
    "OrderParams",
    "ReducedSolution",
    "Residuals3",
    "Observables",
    "wstar",
    "gaussian_averages",
    "full_residuals",
    "eliminate_conjugates",
    "reduced_residuals",
    "free_energy_value",
    "solve_reduced",
    "observables",
]

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# solve_reduced convergence contract (max-abs over the three scaled residuals)
RESIDUAL_TOL = 1e-10
# inner Newton target, kept below the public contract for slack
_NEWTON_TOL = 1e-12

# q0 mismatch below this is treated as roundoff when lifting conjugates
_LIFT_SLACK = 1e-9


@dataclass(frozen=True)
class ProblemParams:
    """Problem parameters: confidence level, aspect ratio, regularizer amplitude.

    alpha: confidence level, 0 < alpha < 1
    r:     aspect ratio N/T, r > 0
    eta:   regularizer amplitude, eta >= 0.  eta = 0 is admitted only where
           a finite saddle exists; solve_reduced raises InfeasibleRegion
           otherwise.
    """

    alpha: float
    r: float
    eta: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.r > 0.0:
            raise DomainError(f"r must be positive, got {self.r}")
        if not self.eta >= 0.0:
            raise DomainError(f"eta must be nonnegative, got {self.eta}")


@dataclass(frozen=True)
class OrderParams:
    """The six order parameters of the free-energy functional.

    lambda_:   budget-constraint multiplier
    epsilon:   in-sample VaR estimate
    q0:        second moment of the weights, >= 1
    delta:     susceptibility, > 0
    q0_hat:    conjugate of q0, <= 0 (the potential uses sqrt(-2 q0_hat))
    delta_hat: conjugate of delta
    """

    lambda_: float
    epsilon: float
    q0: float
    delta: float
    q0_hat: float
    delta_hat: float

    def __post_init__(self):
        if not self.q0 >= 1.0:
            raise DomainError(f"q0 must be >= 1, got {self.q0}")
        if not self.delta > 0.0:
            raise DomainError(f"delta must be positive, got {self.delta}")
        if not self.q0_hat <= 0.0:
            raise DomainError(f"q0_hat must be <= 0, got {self.q0_hat}")


@dataclass(frozen=True)
class Residuals3:
    """Residuals of the three reduced equations, in their printed order."""

    e1: float
    e2: float
    e3: float

    def max_abs(self):
        return max(abs(self.e1), abs(self.e2), abs(self.e3))


@dataclass(frozen=True)
class ReducedSolution:
    """A converged root of the reduced system with attached observables.

    free_energy is the optimal cost per asset excluding the regularization
    penalty; the penalty-included functional value is
    free_energy + eta * q0.  es_in_sample = r * free_energy / (1 - alpha).
    rel_error = sqrt(q0) - 1.  iterations counts Newton steps (diagnostic).
    """

    params: ProblemParams
    q0: float
    delta: float
    epsilon: float
    residual_norm: float
    free_energy: float
    es_in_sample: float
    rel_error: float
    iterations: int = 0


Observables = namedtuple("Observables", ["rel_error", "susceptibility", "var_in", "es_in"])


def _conv(op, eta):
    """Curvature 2*(delta_hat + eta) of the scalar potential; must be > 0."""
    c = op.delta_hat + eta
    if not c > 0.0:
        raise NonConvexPotential(
            f"delta_hat + eta = {c} is not positive; "
            "the scalar potential has no minimum"
        )
    return 2.0 * c


def wstar(z, op, eta):
    """Closed-form minimizer of the scalar potential at Gaussian field z.

    V(w, z) = delta_hat w^2 - lambda w - z w sqrt(-2 q0_hat) + eta w^2
    is strictly convex for delta_hat + eta > 0 and minimized at
    w* = (lambda + z sqrt(-2 q0_hat)) / (2 (delta_hat + eta)).
    """
    den = _conv(op, eta)
    return (op.lambda_ + z * math.sqrt(-2.0 * op.q0_hat)) / den


def gaussian_averages(op, eta):
    """Closed-form standard-normal moments of the affine minimizer.

    Returns (mean_w, mean_wz, mean_w2); no quadrature involved.
    """
    den = _conv(op, eta)
    c = math.sqrt(-2.0 * op.q0_hat)
    mean_w = op.lambda_ / den
    mean_wz = c / den
    mean_w2 = mean_w * mean_w + (c * c) / (den * den)
    return mean_w, mean_wz, mean_w2


def _gauss_weighted(fun, knots, epsabs=1e-13):
    """Integral of exp(-s^2) * fun(s) over the real line.

    Split at the supplied knots so the adaptive rule never straddles a
    kink of the integrand.  Returns (value, accumulated error estimate).
    """
    pts = sorted(knots)
    edges = [-np.inf] + pts + [np.inf]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = quad(
            lambda s: math.exp(-s * s) * fun(s), a, b,
            epsabs=epsabs, epsrel=1e-12, limit=200,
        )
        total += val
        err += e
    return total, err


def _integrand_knots(a, b):
    # kinks of g(a + b s) at a + b s = 0 and a + b s = -1
    return [-a / b, -(1.0 + a) / b]


def full_residuals(op, p):
    """Residuals (LHS - RHS) of the six stationarity equations as printed.

    Order: budget equation, then the three s-integral equations, then the
    susceptibility and second-moment identities.  The s-integrals are
    adaptive quadrature split at the integrand knots; the Gaussian moments
    of w* use their closed forms.
    """
    K = kernels
    lam, eps, q0, delta = op.lambda_, op.epsilon, op.q0, op.delta
    qh, dh = op.q0_hat, op.delta_hat
    alpha, r, eta = p.alpha, p.r, p.eta
    a = eps / delta
    b = math.sqrt(2.0 * q0) / delta
    knots = _integrand_knots(a, b)

    i_g, err_g = _gauss_weighted(lambda s: K.g(a + b * s), knots)
    i_gp, err_gp = _gauss_weighted(lambda s: K.g_prime(a + b * s), knots)
    i_sgp, err_sgp = _gauss_weighted(lambda s: s * K.g_prime(a + b * s), knots)
    if err_g + err_gp + err_sgp > 1e-10:
        raise QuadratureFailure(
            f"accumulated quadrature error estimate {err_g + err_gp + err_sgp:.2e} "
            "exceeds 1e-10"
        )

    mean_w, mean_wz, mean_w2 = gaussian_averages(op, eta)
    sq = math.sqrt(-2.0 * qh)
    # closed-form ratio <w* z>/sqrt(-2 q0_hat), finite also at q0_hat = 0
    ratio = mean_wz / sq if sq > 0.0 else 1.0 / _conv(op, eta)

    r1 = 1.0 - mean_w
    r2 = (1.0 - alpha) + i_gp / (2.0 * _SQRT_PI)
    r3 = dh - i_sgp / (2.0 * r * math.sqrt(2.0 * math.pi * q0))
    r4 = -qh - 2.0 * dh * q0 / delta + i_g / (2.0 * r * _SQRT_PI) + (1.0 - alpha) * a / r
    r5 = delta - ratio
    r6 = q0 - mean_w2
    return np.array([r1, r2, r3, r4, r5, r6])


def eliminate_conjugates(q0, delta, epsilon, p):
    """Reconstruct (lambda, q0_hat, delta_hat) from the moment relations.

    delta = 1/(2(delta_hat + eta))  =>  delta_hat = 1/(2 delta) - eta
    <w*> = 1                        =>  lambda = 1/delta
    q0 = 1 + (-2 q0_hat) delta^2    =>  q0_hat = -(q0 - 1)/(2 delta^2)
    """
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    if q0 < 1.0 - _LIFT_SLACK:
        raise InfeasibleLift(
            f"q0 = {q0} < 1 would force a positive conjugate q0_hat"
        )
    q0 = max(q0, 1.0)  # clamp roundoff-level deficit
    lam = 1.0 / delta
    delta_hat = 1.0 / (2.0 * delta) - p.eta
    q0_hat = -(q0 - 1.0) / (2.0 * delta * delta)
    return OrderParams(
        lambda_=lam,
        epsilon=epsilon,
        q0=q0,
        delta=delta,
        q0_hat=q0_hat,
        delta_hat=delta_hat,
    )


def reduced_residuals(q0, delta, epsilon, p):
    """Residuals (LHS - RHS) of the three reduced equations, printed order.

    At eta = 0 every regularizer term vanishes and only those: e1 loses
    its -2 r delta eta part, e3 its -2 q0 eta / delta part, e2 never had
    one.  e1 is affine in eta with slope -2 r delta.
    """
    if not q0 > 0.0:
        raise DomainError(f"q0 must be positive, got {q0}")
    if not delta > 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    s = math.sqrt(q0)
    e1, e2, e3 = kernels.scaled_residuals(
        (delta + epsilon) / s, epsilon / s, math.log(q0), p.alpha, p.r, p.eta
    )
    return Residuals3(e1, e2, e3)


def free_energy_value(op, p):
    """Penalty-included free-energy functional of all six order parameters.

    Stationary in every order parameter at the saddle point.  At a lifted
    reduced solution its value equals ReducedSolution.free_energy plus
    eta * q0.
    """
    K = kernels
    lam, eps, q0, delta = op.lambda_, op.epsilon, op.q0, op.delta
    qh, dh = op.q0_hat, op.delta_hat
    alpha, r, eta = p.alpha, p.r, p.eta
    den = _conv(op, eta)
    a = eps / delta
    b = math.sqrt(2.0 * q0) / delta
    i_g, err_g = _gauss_weighted(lambda s: K.g(a + b * s), _integrand_knots(a, b))
    if err_g > 1e-10:
        raise QuadratureFailure(
            f"quadrature error estimate {err_g:.2e} exceeds 1e-10"
        )
    min_v = -(lam * lam - 2.0 * qh) / (2.0 * den)
    return (
        lam
        + (1.0 - alpha) * eps / r
        - delta * qh
        - dh * q0
        + min_v
        + delta / (2.0 * r * _SQRT_PI) * i_g
    )


def _closed_free_energy(q0, delta, epsilon, p):
    """Penalty-included free energy at a reduced root, in closed form."""
    K = kernels
    s = math.sqrt(q0)
    w_diff = K.w_fn((delta + epsilon) / s) - K.w_fn(epsilon / s)
    return (
        (1.0 - q0) / (2.0 * delta)
        + p.eta * q0
        - p.alpha * epsilon / (p.r)
        - delta / (2.0 * p.r)
        + q0 / (p.r * delta) * w_diff
    )


def _self_start(p):
    """Heuristic initial guess (q0, delta, epsilon) = (1.5, 0.5, 0.5 sqrt(q0) z_alpha).

    z_alpha is the standard normal quantile at alpha; the epsilon guess
    sits halfway to the small-r limit where epsilon -> sqrt(q0) z_alpha
    (the VaR of a unit-variance portfolio, positive for alpha > 1/2).
    Overridden by continuation when tracing curves.
    """
    q0 = 1.5
    delta = 0.5
    eps = 0.5 * math.sqrt(q0) * float(ndtri(p.alpha))
    return q0, delta, eps


def _to_uvt(q0, delta, epsilon):
    s = math.sqrt(q0)
    return (delta + epsilon) / s, epsilon / s, math.log(q0)


def _from_uvt(u, v, t):
    s = math.exp(0.5 * t)
    return s * s, (u - v) * s, v * s


def _newton(x, p, eta=None, maxiter=120):
    eta = p.eta if eta is None else eta
    return kernels.newton_reduced(
        x[0], x[1], x[2], p.alpha, p.r, eta, _NEWTON_TOL, maxiter
    )


_ETA_LADDER_STEPS = 14


def _continuation_solve(p, x0):
    """Walk eta down a geometric ladder to the target, warm-starting each rung.

    Used both as a restart after divergence at eta > 0 and as the route
    into eta = 0 from the regularized side.
    """
    eta_hi = max(1.0, 4.0 * p.eta)
    eta_lo = p.eta if p.eta > 0.0 else 1e-6
    x = x0
    for e in np.geomspace(eta_hi, eta_lo, _ETA_LADDER_STEPS):
        u, v, t, _, status, _ = _newton(x, p, eta=float(e))
        # a stalled rung can still warm-start the next one; anything that
        # left the chart cannot
        in_chart = (
            all(math.isfinite(c) for c in (u, v, t)) and u - v > 0.0
        )
        if status not in (kernels.STATUS_OK, kernels.STATUS_STALLED) or not in_chart:
            return None
        x = (u, v, t)
    u, v, t, niter, status, resnorm = _newton(x, p)
    return (u, v, t, niter, status, resnorm)


def _trust_region_restart(x, p):
    """Derivative-free restart for stalled Newton iterations.

    The returned point is clamped back into the solver's chart (u > v,
    bounded t) so a wandering search cannot hand the polish step an
    iterate it would overflow on.
    """

    def fun(y):
        uu, vv, tt = y
        if not uu - vv > 0.0:
            return [1e6, 1e6, 1e6]
        tt = min(max(tt, -40.0), 45.0)
        e1, e2, e3 = kernels.scaled_residuals(uu, vv, tt, p.alpha, p.r, p.eta)
        return [e1, e2, e3]

    res = _scipy_root(fun, list(x), method="hybr", options={"maxfev": 4000})
    uu, vv, tt = (float(c) for c in res.x)
    if not (math.isfinite(uu) and math.isfinite(vv) and math.isfinite(tt)):
        return x
    if not uu - vv > 0.0:
        return x
    return (uu, vv, min(max(tt, -40.0), 45.0))


def _safe_lift(u, v, t):
    finite = all(math.isfinite(c) for c in (u, v, t))
    if not finite or abs(t) > 700.0:
        return None
    return _from_uvt(u, v, t)


def _eta0_diverges(p):
    """Regularized-side probe separating a missing saddle from a stall.

    Above the phase boundary the eta = 0 system has no root and the
    regularized q0 scales like 1/eta; below it q0(eta) plateaus at the
    finite eta = 0 value.  A factor-3 rise over two decades of eta is
    read as divergence.  Deep in the infeasible region the iteration can
    stall inside the overflow guard instead of tripping it, so the
    status alone cannot make this call.
    """
    try:
        q_first = None
        init = None
        for e in (1e-4, 1e-5, 1e-6):
            sol = solve_reduced(ProblemParams(p.alpha, p.r, e), init=init)
            init = (sol.q0, sol.delta, sol.epsilon)
            if q_first is None:
                q_first = sol.q0
        return sol.q0 > 3.0 * q_first
    except (NoConvergence, DomainError):
        return False


def solve_reduced(p, init=None):
    """Solve the reduced three-equation system at the given parameters.

    init, when given, is a (q0, delta, epsilon) warm start; otherwise the
    solver self-starts.  Deterministic for identical inputs.

    Returns a ReducedSolution with residual_norm <= 1e-10 (max-abs over
    the scaled residuals).  An iteration that stalls inside that contract
    is accepted as converged: at small r the third scaled residual is an
    f3 / r quotient whose evaluation floor grows like 1/r, so demanding
    the tighter internal tolerance there would reject genuine roots.
    Raises InfeasibleRegion when eta = 0 and the iteration diverges (q0
    or delta beyond 1e12: no finite saddle above the phase boundary), or
    when every restart stalls and a regularized probe shows q0 scaling
    like 1/eta (the iteration can stall inside the overflow guard deep in
    the infeasible region).  At eta > 0 divergence triggers a re-damped
    continuation restart instead, since a finite saddle always exists.
    Raises NoConvergence when every restart strategy is exhausted.
    """
    if init is None:
        x0 = _to_uvt(*_self_start(p))
    else:
        q0i, di, ei = init
        if not (q0i > 0.0 and di > 0.0):
            raise DomainError(f"init requires q0 > 0 and delta > 0, got {init}")
        x0 = _to_uvt(q0i, di, ei)

    def _usable(uu, vv, tt, rn):
        return (
            math.isfinite(rn)
            and rn <= RESIDUAL_TOL
            and all(math.isfinite(c) for c in (uu, vv, tt))
            and uu - vv > 0.0
            and abs(tt) <= 700.0
        )

    u, v, t, niter, status, resnorm = _newton(x0, p)
    total_iter = niter

    if status == kernels.STATUS_DIVERGED and p.eta == 0.0:
        raise InfeasibleRegion(
            f"no finite saddle at alpha={p.alpha}, r={p.r}, eta=0: "
            "the iteration diverged past the overflow guard"
        )

    if not _usable(u, v, t, resnorm):
        out = _continuation_solve(p, x0)
        if out is not None:
            u, v, t, niter, status, resnorm = out
            total_iter += niter
        if status == kernels.STATUS_DIVERGED and p.eta == 0.0:
            raise InfeasibleRegion(
                f"no finite saddle at alpha={p.alpha}, r={p.r}, eta=0: "
                "the continuation route diverged past the overflow guard"
            )

    if not _usable(u, v, t, resnorm):
        # A diverged iterate is a bad restart seed: it sits past the overflow
        # guard, so hand the derivative-free search the original start instead.
        stalled_here = (
            status == kernels.STATUS_STALLED
            and math.isfinite(u)
            and u - v > 0.0
        )
        x_tr = _trust_region_restart((u, v, t) if stalled_here else x0, p)
        u, v, t, niter, status, resnorm = _newton(x_tr, p)
        total_iter += niter

    if not _usable(u, v, t, resnorm):
        if p.eta == 0.0 and _eta0_diverges(p):
            raise InfeasibleRegion(
                f"no finite saddle at alpha={p.alpha}, r={p.r}, eta=0: "
                "q0 grows unboundedly along the regularized approach"
            )
        raise NoConvergence(
            f"reduced system did not converge at alpha={p.alpha}, r={p.r}, "
            f"eta={p.eta}: residual {resnorm:.3e}",
            last=_safe_lift(u, v, t),
            residual_norm=resnorm,
        )

    q0, delta, epsilon = _from_uvt(u, v, t)
    f_pen = _closed_free_energy(q0, delta, epsilon, p)
    free_energy = f_pen - p.eta * q0
    return ReducedSolution(
        params=p,
        q0=q0,
        delta=delta,
        epsilon=epsilon,
        residual_norm=resnorm,
        free_energy=free_energy,
        es_in_sample=p.r * free_energy / (1.0 - p.alpha),
        rel_error=max(0.0, math.sqrt(q0) - 1.0),
        iterations=total_iter,
    )


def observables(sol):
    """Project a converged solution onto its financial observables.

    rel_error = sqrt(q0) - 1 (relative estimation error of out-of-sample
    weights), susceptibility = delta (response of the mean weight to a
    return shift), var_in = epsilon (in-sample VaR estimate), es_in =
    r * free_energy / (1 - alpha).
    """
    return Observables(
        rel_error=sol.rel_error,
        susceptibility=sol.delta,
        var_in=sol.epsilon,
        es_in=sol.es_in_sample,
    )
