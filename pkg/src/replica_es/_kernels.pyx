# cython: language_level=3, boundscheck=False, cdivision=True
"""Compiled scalar kernels: special functions and the damped Newton loop.

Compiled twin of ``replica_es._kernels_py``.  Both modules expose the same
names with identical semantics and the same algorithm; keep edits mirrored.
Pure C math only (libc), no numpy dependency.
"""

from libc.math cimport erfc, exp, fabs, isfinite, log, sqrt

BACKEND_NAME = "c"

cdef double _SQRT2 = sqrt(2.0)
cdef double _INV_SQRT_2PI = 1.0 / sqrt(2.0 * 3.14159265358979323846)
cdef double _TAIL_CUT = -25.0
cdef double _DIVERGENCE_LIMIT = 1.0e12
cdef double _T_DIV = log(1.0e12)

DIVERGENCE_LIMIT = _DIVERGENCE_LIMIT

STATUS_OK = 0
STATUS_STALLED = 1
STATUS_MAXITER = 2
STATUS_DIVERGED = 3


cdef inline double c_phi(double x) nogil:
    return 0.5 * erfc(-x / _SQRT2)


cdef inline double c_density(double x) nogil:
    return exp(-0.5 * x * x) * _INV_SQRT_2PI


cdef inline double c_psi(double x) nogil:
    if x < _TAIL_CUT:
        return 0.0
    return x * c_phi(x) + c_density(x)


cdef inline double c_w(double x) nogil:
    if x < _TAIL_CUT:
        return 0.0
    return 0.5 * ((x * x + 1.0) * c_phi(x) + x * c_density(x))


cdef inline double c_g(double x) nogil:
    if x > 0.0:
        return 0.0
    if x >= -1.0:
        return x * x
    return -2.0 * x - 1.0


cdef inline double c_g_prime(double x) nogil:
    if x > 0.0:
        return 0.0
    if x >= -1.0:
        return 2.0 * x
    return -2.0


def phi(double x):
    """Standard normal CDF, complementary-error-function kernel."""
    return c_phi(x)


def gauss_density(double x):
    """Standard normal density."""
    return c_density(x)


def psi(double x):
    """x * phi(x) + density(x); nonnegative, tends to 0 fast for x -> -inf."""
    return c_psi(x)


def w_fn(double x):
    """((x^2 + 1)/2) * phi(x) + (x/2) * density(x)."""
    return c_w(x)


def g(double x):
    """Piecewise potential: 0 for x >= 0, x^2 on [-1, 0], -2x - 1 below -1.

    The middle branch owns both knots, so ties resolve to it.
    """
    return c_g(x)


def g_prime(double x):
    """Derivative of g with the same knot ownership as g."""
    return c_g_prime(x)


cdef inline void c_reduced_f(double u, double v, double t,
                             double alpha, double r, double eta,
                             double* f1, double* f2, double* f3) nogil:
    cdef double s = exp(0.5 * t)
    cdef double d = (u - v) * s
    f1[0] = c_phi(u) - c_phi(v) - r + 2.0 * eta * r * d
    f2[0] = c_psi(u) - c_psi(v) - alpha * (u - v)
    f3[0] = (c_w(u) - c_w(v) - alpha * v * (u - v) - 0.5 * (u - v) * (u - v)
             - 0.5 * r * (1.0 + exp(-t)) + 2.0 * eta * r * d)


def reduced_f(double u, double v, double t, double alpha, double r, double eta):
    """Unscaled residual triple of the reduced saddle system."""
    cdef double f1, f2, f3
    c_reduced_f(u, v, t, alpha, r, eta, &f1, &f2, &f3)
    return f1, f2, f3


def scaled_residuals(double u, double v, double t,
                     double alpha, double r, double eta):
    """Residuals on the public equation scale (the e1, e2, e3 convention)."""
    cdef double f1, f2, f3
    cdef double duv = u - v
    c_reduced_f(u, v, t, alpha, r, eta, &f1, &f2, &f3)
    return -f1, -f2 / duv, -f3 / (r * duv * duv)


cdef inline double c_enorm(double f1, double f2, double f3,
                           double u, double v, double r) nogil:
    cdef double duv = u - v
    cdef double a = fabs(f1)
    cdef double b = fabs(f2 / duv)
    cdef double c = fabs(f3 / (r * duv * duv))
    if b > a:
        a = b
    if c > a:
        a = c
    return a


cdef int c_solve3(double a[3][3], double b[3], double x[3]) nogil:
    """Gaussian elimination with partial pivoting; 0 on success, 1 if singular."""
    cdef double m[3][4]
    cdef int col, row, p, k
    cdef double fac, inv, acc, tmp
    for row in range(3):
        for col in range(3):
            m[row][col] = a[row][col]
        m[row][3] = b[row]
    for col in range(3):
        p = col
        for row in range(col + 1, 3):
            if fabs(m[row][col]) > fabs(m[p][col]):
                p = row
        if m[p][col] == 0.0:
            return 1
        if p != col:
            for k in range(4):
                tmp = m[col][k]
                m[col][k] = m[p][k]
                m[p][k] = tmp
        inv = 1.0 / m[col][col]
        for row in range(col + 1, 3):
            fac = m[row][col] * inv
            if fac != 0.0:
                for k in range(col, 4):
                    m[row][k] -= fac * m[col][k]
    for row in range(2, -1, -1):
        acc = m[row][3]
        for k in range(row + 1, 3):
            acc -= m[row][k] * x[k]
        if m[row][row] == 0.0:
            return 1
        x[row] = acc / m[row][row]
    return 0


def newton_reduced(double u, double v, double t,
                   double alpha, double r, double eta,
                   double tol=1e-12, int maxiter=120):
    """Damped Newton iteration for the reduced system in (u, v, log q0).

    Same contract as the pure-Python twin: returns
    (u, v, t, niter, status, resnorm) with status 0 converged, 1 stalled,
    2 iteration cap, 3 diverged (q0 or delta crossed 1e12).
    """
    cdef double f1, f2, f3, nf, ng, g1, g2, g3
    cdef double J[3][3]
    cdef double rhs[3]
    cdef double dx[3]
    cdef double lam, un, vn, tn, s, es, resnorm
    cdef int niter = 0
    cdef int status = STATUS_MAXITER
    cdef bint accepted

    c_reduced_f(u, v, t, alpha, r, eta, &f1, &f2, &f3)
    nf = fabs(f1)
    if fabs(f2) > nf:
        nf = fabs(f2)
    if fabs(f3) > nf:
        nf = fabs(f3)

    while niter < maxiter:
        if c_enorm(f1, f2, f3, u, v, r) <= tol:
            status = STATUS_OK
            break
        if t > _T_DIV or (u - v) * exp(0.5 * t) > _DIVERGENCE_LIMIT:
            status = STATUS_DIVERGED
            break
        s = exp(0.5 * t)
        es = 2.0 * eta * r * s
        J[0][0] = c_density(u) + es
        J[0][1] = -c_density(v) - es
        J[0][2] = 0.5 * es * (u - v)
        J[1][0] = c_phi(u) - alpha
        J[1][1] = alpha - c_phi(v)
        J[1][2] = 0.0
        J[2][0] = c_psi(u) - alpha * v - (u - v) + es
        J[2][1] = -c_psi(v) + alpha * (2.0 * v - u) + (u - v) - es
        J[2][2] = 0.5 * r * exp(-t) + 0.5 * es * (u - v)
        rhs[0] = -f1
        rhs[1] = -f2
        rhs[2] = -f3
        if c_solve3(J, rhs, dx) != 0:
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
                c_reduced_f(un, vn, tn, alpha, r, eta, &g1, &g2, &g3)
                ng = fabs(g1)
                if fabs(g2) > ng:
                    ng = fabs(g2)
                if fabs(g3) > ng:
                    ng = fabs(g3)
                if isfinite(ng) and ng < nf:
                    u = un
                    v = vn
                    t = tn
                    f1 = g1
                    f2 = g2
                    f3 = g3
                    nf = ng
                    accepted = True
                    break
            lam *= 0.5
        niter += 1
        if not accepted:
            status = STATUS_STALLED
            break

    resnorm = c_enorm(f1, f2, f3, u, v, r)
    if status == STATUS_MAXITER and resnorm <= tol:
        status = STATUS_OK
    return u, v, t, niter, status, resnorm
