"""Pure-Python scalar kernels: special functions and the damped Newton loop.

Reference twin of the compiled extension ``replica_es._kernels``.  Both
modules expose the same names with identical semantics and the same
algorithm, so the backend can be swapped at import time without any
behavioral change beyond speed.  Keep edits mirrored between the two.

Everything here is scalar, pure, and stateless.
"""

import math

BACKEND_NAME = "python"

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Below this argument both psi and w_fn are < 1e-136: short-circuit to 0.
_TAIL_CUT = -25.0

# Hard divergence guard: q0 or delta beyond this means no finite saddle.
DIVERGENCE_LIMIT = 1.0e12
_T_DIV = math.log(DIVERGENCE_LIMIT)


def phi(x):
    """Standard normal CDF, complementary-error-function kernel.

    The erfc form keeps full relative accuracy in the left tail, where
    the naive 1 - cdf(-x) would cancel.
    """
    return 0.5 * math.erfc(-x / _SQRT2)


def gauss_density(x):
    """Standard normal density."""
    return math.exp(-0.5 * x * x) * _INV_SQRT_2PI


def psi(x):
    """x * phi(x) + density(x); nonnegative, tends to 0 fast for x -> -inf."""
    if x < _TAIL_CUT:
        return 0.0
    return x * phi(x) + gauss_density(x)


def w_fn(x):
    """((x^2 + 1)/2) * phi(x) + (x/2) * density(x); second antiderivative family of phi."""
    if x < _TAIL_CUT:
        return 0.0
    return 0.5 * ((x * x + 1.0) * phi(x) + x * gauss_density(x))


def g(x):
    """Piecewise potential: 0 for x >= 0, x^2 on [-1, 0], -2x - 1 below -1.

    The middle branch owns both knots, so ties resolve to it.
    """
    if x > 0.0:
        return 0.0
    if x >= -1.0:
        return x * x
    return -2.0 * x - 1.0


def g_prime(x):
    """Derivative of g with the same knot ownership as g."""
    if x > 0.0:
        return 0.0
    if x >= -1.0:
        return 2.0 * x
    return -2.0


def reduced_f(u, v, t, alpha, r, eta):
    """Unscaled residual triple of the reduced saddle system.

    Coordinates: u, v are the two tail arguments, t = log q0; the
    transform is q0 = e^t, delta = (u - v) e^{t/2}, epsilon = v e^{t/2}.
    """
    s = math.exp(0.5 * t)
    d = (u - v) * s
    f1 = phi(u) - phi(v) - r + 2.0 * eta * r * d
    f2 = psi(u) - psi(v) - alpha * (u - v)
    f3 = (w_fn(u) - w_fn(v) - alpha * v * (u - v) - 0.5 * (u - v) ** 2
          - 0.5 * r * (1.0 + math.exp(-t)) + 2.0 * eta * r * d)
    return f1, f2, f3


def scaled_residuals(u, v, t, alpha, r, eta):
    """Residuals on the public equation scale (the e1, e2, e3 convention).

    e1 is affine in eta with slope -2 r delta; e3 is affine in eta with
    slope -2 q0 / delta.
    """
    f1, f2, f3 = reduced_f(u, v, t, alpha, r, eta)
    duv = u - v
    return -f1, -f2 / duv, -f3 / (r * duv * duv)


def _enorm_from_f(f1, f2, f3, u, v, r):
    duv = u - v
    return max(abs(f1), abs(f2 / duv), abs(f3 / (r * duv * duv)))


def _jac(u, v, t, alpha, r, eta):
    s = math.exp(0.5 * t)
    es = 2.0 * eta * r * s
    return (
        (gauss_density(u) + es, -gauss_density(v) - es, 0.5 * es * (u - v)),
        (phi(u) - alpha, alpha - phi(v), 0.0),
        (psi(u) - alpha * v - (u - v) + es,
         -psi(v) + alpha * (2.0 * v - u) + (u - v) - es,
         0.5 * r * math.exp(-t) + 0.5 * es * (u - v)),
    )


def _solve3(a, b):
    """Solve a 3x3 linear system by Gaussian elimination with partial pivoting.

    Returns None when the pivot underflows to zero (singular to working
    precision).
    """
    m = [[a[0][0], a[0][1], a[0][2], b[0]],
         [a[1][0], a[1][1], a[1][2], b[1]],
         [a[2][0], a[2][1], a[2][2], b[2]]]
    for col in range(3):
        p = col
        for row in range(col + 1, 3):
            if abs(m[row][col]) > abs(m[p][col]):
                p = row
        if m[p][col] == 0.0:
            return None
        if p != col:
            m[col], m[p] = m[p], m[col]
        inv = 1.0 / m[col][col]
        for row in range(col + 1, 3):
            fac = m[row][col] * inv
            if fac != 0.0:
                for k in range(col, 4):
                    m[row][k] -= fac * m[col][k]
    x = [0.0, 0.0, 0.0]
    for row in (2, 1, 0):
        acc = m[row][3]
        for k in range(row + 1, 3):
            acc -= m[row][k] * x[k]
        piv = m[row][row]
        if piv == 0.0:
            return None
        x[row] = acc / piv
    return x


# Newton iteration status codes (shared with the compiled twin)
STATUS_OK = 0
STATUS_STALLED = 1
STATUS_MAXITER = 2
STATUS_DIVERGED = 3


def newton_reduced(u, v, t, alpha, r, eta, tol=1e-12, maxiter=120):
    """Damped Newton iteration for the reduced system in (u, v, log q0).

    Line search backtracks until the max-abs unscaled residual strictly
    decreases; trial steps that would make u <= v (negative delta) or push
    t outside [-40, 45] are shrunk or clamped.  Large-argument saturation
    is benign in these coordinates: for u >> 1, phi(u) pins to 1 while
    psi(u) = u and w_fn(u) = (u^2+1)/2 stay exact, and the Jacobian keeps
    a well-conditioned 3x3 structure, so roots with extreme tail
    arguments (confidence levels close to 1) converge without
    reparametrization.

    Returns (u, v, t, niter, status, resnorm):
      status 0  converged (resnorm <= tol on the scaled-equation scale)
      status 1  stalled: singular Jacobian or no downhill step
      status 2  iteration cap reached
      status 3  diverged: q0 or delta crossed 1e12 (no finite saddle)
    resnorm is the final max-abs scaled residual.
    """
    f1, f2, f3 = reduced_f(u, v, t, alpha, r, eta)
    nf = max(abs(f1), abs(f2), abs(f3))
    niter = 0
    status = STATUS_MAXITER
    while niter < maxiter:
        if _enorm_from_f(f1, f2, f3, u, v, r) <= tol:
            status = STATUS_OK
            break
        if t > _T_DIV or (u - v) * math.exp(0.5 * t) > DIVERGENCE_LIMIT:
            status = STATUS_DIVERGED
            break
        dx = _solve3(_jac(u, v, t, alpha, r, eta), (-f1, -f2, -f3))
        if dx is None:
            status = STATUS_STALLED
            break
        lam = 1.0
        accepted = False
        while lam >= 1e-10:
            un = u + lam * dx[0]
            vn = v + lam * dx[1]
            tn = t + lam * dx[2]
            if tn < -40.0:
                tn = -40.0
            elif tn > 45.0:
                tn = 45.0
            if un - vn > 0.0:
                g1, g2, g3 = reduced_f(un, vn, tn, alpha, r, eta)
                ng = max(abs(g1), abs(g2), abs(g3))
                if math.isfinite(ng) and ng < nf:
                    u, v, t = un, vn, tn
                    f1, f2, f3 = g1, g2, g3
                    nf = ng
                    accepted = True
                    break
            lam *= 0.5
        niter += 1
        if not accepted:
            status = STATUS_STALLED
            break
    resnorm = _enorm_from_f(f1, f2, f3, u, v, r)
    if status == STATUS_MAXITER and resnorm <= tol:
        status = STATUS_OK
    return u, v, t, niter, status, resnorm
