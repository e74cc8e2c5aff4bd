"""Finite-sample ground truth for the asymptotic solver.

Samples i.i.d. Gaussian return matrices, solves the regularized Expected
Shortfall program exactly with a certified convex solver, and estimates
the same observables the reduced system predicts: mean squared weight,
in-sample VaR and ES, and the weight susceptibility.  One replication is
one (seed, rep_index) pair, so replications are reproducible in any
order.

Scaling convention: a stored return matrix holds raw standard normal
draws; the program itself consumes returns divided by sqrt(n_assets), so
portfolio returns stay O(1) when the budget fixes the weights to sum to
n_assets.  All reported observables refer to the scaled program.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import osqp
import scipy.linalg
import scipy.sparse
import scipy.special
from scipy.optimize import linprog

from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers
from cvxopt import spmatrix as _cvxsp

from .errors import AllUnbounded, DomainError, NoConvergence, ShiftTooLarge, Unbounded

__all__ = [
    "MCConfig",
    "MCInstance",
    "MCSummary",
    "Estimate",
    "sample_instance",
    "solve_program",
    "estimate_summary",
    "estimate_susceptibility",
    "active_scenarios",
    "es_out_analytic",
    "es_unit",
]

_QP_OPTIONS = {
    "abstol": 1e-10,
    "reltol": 1e-10,
    "feastol": 1e-9,
    "maxiters": 200,
    "show_progress": False,
}

# scenarios with portfolio return at or below -(VaR estimate) carry the
# shortfall average; the tolerance absorbs interior-point rounding
_ACTIVE_TOL = 1e-7

# operator-splitting route: ADMM tolerance escalates until the polish
# step (exact KKT solve on the identified active set) certifies the
# solution; the final rung is expensive but has always recovered a
# failed polish in testing
_SPLITTING_EPS = (1e-6, 1e-8, 1e-10)
_SPLITTING_GAP_TOL = 1e-8
_SPLITTING_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class MCConfig:
    """One Monte Carlo experiment: problem size, parameters, replication plan.

    shift_xi is the tilt size used by the susceptibility probe (the
    finite-difference response of the weights to small per-asset return
    shifts).
    """

    n_assets: int
    n_obs: int
    alpha: float
    eta: float
    n_samples: int
    seed: int
    shift_xi: float = 1e-3

    def __post_init__(self):
        if not (isinstance(self.n_assets, (int, np.integer)) and self.n_assets >= 2):
            raise DomainError(f"n_assets must be an integer >= 2, got {self.n_assets}")
        if not (isinstance(self.n_obs, (int, np.integer)) and self.n_obs >= 2):
            raise DomainError(f"n_obs must be an integer >= 2, got {self.n_obs}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eta >= 0.0:
            raise DomainError(f"eta must be nonnegative, got {self.eta}")
        if not (isinstance(self.n_samples, (int, np.integer)) and self.n_samples >= 1):
            raise DomainError(f"n_samples must be an integer >= 1, got {self.n_samples}")
        if not self.shift_xi > 0.0:
            raise DomainError(f"shift_xi must be positive, got {self.shift_xi}")


@dataclass(frozen=True)
class MCInstance:
    """An exactly solved finite program.

    returns holds the raw standard normal draws (the program scales them
    by 1/sqrt(N) internally); weights, eps_star and slacks are the
    optimizer of the scaled program; objective is the attained value
    (1-alpha)*T*eps_star + sum(slacks) + eta*sum(weights**2).
    duality_gap certifies optimality; budget_multiplier is the shadow
    price of the budget constraint (d objective / d budget).
    """

    returns: np.ndarray
    weights: np.ndarray
    eps_star: float
    slacks: np.ndarray
    objective: float
    duality_gap: float
    budget_multiplier: float


class Estimate(NamedTuple):
    """A point estimate with its standard error over replications."""

    value: float
    se: float


@dataclass(frozen=True)
class MCSummary:
    """Replication averages of the finite-sample observables.

    q0_hat averages (1/N)||w||^2, eps_hat the in-sample VaR variable,
    es_in_hat the shortfall part of the objective per tail observation,
    delta_hat the tilt-response susceptibility (None when the summary
    was built without probes).  feasible_fraction is the share of
    replications with a bounded program (1.0 whenever eta > 0).
    """

    config: MCConfig
    q0_hat: Estimate
    eps_hat: Estimate
    es_in_hat: Estimate
    delta_hat: Estimate | None
    feasible_fraction: float
    n_feasible: int


def sample_instance(cfg, rep_index):
    """Standard normal N x T return draws, deterministic in (seed, rep_index)."""
    if not (isinstance(rep_index, (int, np.integer)) and rep_index >= 0):
        raise DomainError(f"rep_index must be a nonnegative integer, got {rep_index}")
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, int(rep_index))))
    return rng.standard_normal((cfg.n_assets, cfg.n_obs))


# ------------------------------------------------------------------ solvers


def _kkt_factory(Xs, eta):
    """Interior-point KKT solve specialized to this program's structure.

    The scaled Newton system couples N weights, the VaR variable, T
    slacks and one budget multiplier.  Both inequality blocks are
    diagonal in the slack direction, so the slack block reduces by a
    Schur complement with per-scenario weight D1*D2/(D1+D2), leaving a
    dense symmetric (N+2) system that refactors in O(N^2 T) per
    iteration instead of the generic O((N+T)^3).
    """
    N, T = Xs.shape

    def kkt(W):
        d = np.asarray(W["d"]).ravel()
        D1 = 1.0 / d[:T] ** 2
        D2 = 1.0 / d[T:] ** 2
        Dsum = D1 + D2
        Et = D1 * D2 / Dsum
        c1 = D1 / Dsum
        XE = Xs * Et
        K = np.zeros((N + 2, N + 2))
        K[:N, :N] = XE @ Xs.T
        K[np.arange(N), np.arange(N)] += 2.0 * eta
        xe1 = XE.sum(axis=1)
        K[:N, N] = xe1
        K[N, :N] = xe1
        K[N, N] = Et.sum()
        K[:N, N + 1] = 1.0
        K[N + 1, :N] = 1.0
        lu = scipy.linalg.lu_factor(K)

        def solve(x, y, z):
            bx = np.asarray(x).ravel().copy()
            by = float(y[0])
            bz = np.asarray(z).ravel().copy()
            bz1, bz2 = bz[:T], bz[T:]
            rw = bx[:N] - Xs @ (D1 * bz1)
            re = bx[N] - float(np.sum(D1 * bz1))
            ru = bx[N + 1:] - (D1 * bz1 + D2 * bz2)
            rhs = np.empty(N + 2)
            rhs[:N] = rw - Xs @ (c1 * ru)
            rhs[N] = re - float(np.sum(c1 * ru))
            rhs[N + 1] = by
            sol = scipy.linalg.lu_solve(lu, rhs)
            uw = sol[:N]
            ue = sol[N]
            uy = sol[N + 1]
            xtw = Xs.T @ uw
            uu = (ru - D1 * (xtw + ue)) / Dsum
            g1 = -xtw - ue - uu
            g2 = -uu
            x[:N] = _cvxmat(uw)
            x[N] = ue
            x[N + 1:] = _cvxmat(uu)
            y[0] = uy
            z[:T] = _cvxmat((g1 - bz1) / d[:T])
            z[T:] = _cvxmat((g2 - bz2) / d[T:])

        return solve

    return kkt


def _solve_qp(Xs, alpha, eta):
    """Strictly convex route (eta > 0) via a certified interior point."""
    N, T = Xs.shape
    n = N + 1 + T
    P = _cvxsp(2.0 * eta, range(N), range(N), (n, n))
    q = np.zeros(n)
    q[N] = (1.0 - alpha) * T
    q[N + 1:] = 1.0
    Gm = np.zeros((2 * T, n))
    Gm[:T, :N] = -Xs.T
    Gm[:T, N] = -1.0
    Gm[np.arange(T), N + 1 + np.arange(T)] = -1.0
    Gm[T + np.arange(T), N + 1 + np.arange(T)] = -1.0
    A = np.zeros((1, n))
    A[0, :N] = 1.0
    old = dict(_cvxsolvers.options)
    _cvxsolvers.options.update(_QP_OPTIONS)
    try:
        sol = _cvxsolvers.coneqp(
            P, _cvxmat(q), _cvxmat(Gm), _cvxmat(np.zeros(2 * T)),
            A=_cvxmat(A), b=_cvxmat(float(N)),
            kktsolver=_kkt_factory(Xs, eta),
        )
        if sol["status"] != "optimal":
            # generic dense factorization as a second opinion
            sol = _cvxsolvers.coneqp(
                P, _cvxmat(q), _cvxmat(Gm), _cvxmat(np.zeros(2 * T)),
                A=_cvxmat(A), b=_cvxmat(float(N)),
            )
    finally:
        _cvxsolvers.options.clear()
        _cvxsolvers.options.update(old)
    if sol["status"] != "optimal":
        raise NoConvergence(
            f"interior-point solve failed with status {sol['status']!r}"
        )
    x = np.asarray(sol["x"]).ravel()
    return (
        x[:N],
        float(x[N]),
        np.maximum(x[N + 1:], 0.0),
        float(sol["primal objective"]),
        float(sol["gap"]),
        -float(sol["y"][0]),
    )


def _solve_lp(Xs, alpha):
    """Linear route (eta = 0) with explicit unboundedness detection."""
    N, T = Xs.shape
    c = np.concatenate([np.zeros(N), [(1.0 - alpha) * T], np.ones(T)])
    A_ub = scipy.sparse.hstack(
        [
            -Xs.T,
            -np.ones((T, 1)),
            -scipy.sparse.identity(T, format="csc"),
        ],
        format="csc",
    )
    A_eq = scipy.sparse.csc_matrix(
        (np.ones(N), (np.zeros(N, dtype=int), np.arange(N))), shape=(1, N + 1 + T)
    )
    bounds = [(None, None)] * (N + 1) + [(0.0, None)] * T
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.zeros(T),
        A_eq=A_eq,
        b_eq=[float(N)],
        bounds=bounds,
        method="highs",
    )
    if res.status == 3:
        raise Unbounded(
            "the unregularized program admits arbitrarily negative shortfall "
            "on this sample"
        )
    if res.status != 0:
        raise NoConvergence(f"linear solve failed: {res.message}")
    x = res.x
    multiplier = float(res.eqlin.marginals[0])
    #  dual objective = budget * multiplier (all other right-hand sides are 0)
    gap = abs(float(res.fun) - float(N) * multiplier)
    return (
        x[:N],
        float(x[N]),
        np.maximum(x[N + 1:], 0.0),
        float(res.fun),
        gap,
        multiplier,
    )


def _solve_qp_splitting(Xs, alpha, eta):
    """Operator-splitting route (ADMM with active-set polish).

    Slower than the interior point at tight tolerance but factorizes
    only a sparse quasi-definite system, so it stays viable when the
    observation count grows past what the dense Schur solve handles
    comfortably.  Needs eta > 0: without the ridge the iteration loses
    its linear rate and stalls far from certifiable residuals.
    """
    N, T = Xs.shape
    n = N + 1 + T
    P = scipy.sparse.diags(
        np.concatenate([np.full(N, 2.0 * eta), np.zeros(1 + T)])
    ).tocsc()
    q = np.concatenate([np.zeros(N), [(1.0 - alpha) * T], np.ones(T)])
    rows = scipy.sparse.vstack(
        [
            # scenario shortfall:  w . x_t + eps + u_t >= 0
            scipy.sparse.hstack(
                [Xs.T, np.ones((T, 1)), scipy.sparse.identity(T)]
            ),
            # slack nonnegativity:  u_t >= 0
            scipy.sparse.hstack(
                [scipy.sparse.csc_matrix((T, N + 1)), scipy.sparse.identity(T)]
            ),
            # budget:  sum(w) == N
            scipy.sparse.csc_matrix(
                (np.ones(N), (np.zeros(N, dtype=int), np.arange(N))), shape=(1, n)
            ),
        ],
        format="csc",
    )
    lower = np.concatenate([np.zeros(2 * T), [float(N)]])
    upper = np.concatenate([np.full(2 * T, np.inf), [float(N)]])
    last_status = "not attempted"
    for eps_admm in _SPLITTING_EPS:
        prob = osqp.OSQP()
        prob.setup(
            P, q, rows, lower, upper,
            eps_abs=eps_admm, eps_rel=eps_admm,
            max_iter=200_000, polishing=True, verbose=False,
        )
        res = prob.solve(raise_error=False)
        status = res.info.status
        last_status = f"{status} at eps {eps_admm:g}"
        if "dual infeasible" in status:
            raise Unbounded(
                "the shortfall program is unbounded below on this sample"
            )
        if "primal infeasible" in status:
            # the slack variables make the program feasible for every
            # sample, so this can only be a numerical verdict
            raise NoConvergence(f"splitting solve failed: {last_status}")
        if not status.startswith("solved") or res.info.status_polish != 1:
            continue
        x = np.asarray(res.x, dtype=float)
        w = x[:N]
        eps_star = float(x[N])
        slacks = np.maximum(x[N + 1:], 0.0)
        violation = max(
            0.0, float(-np.min(Xs.T @ w + eps_star + slacks))
        )
        budget_dev = abs(float(w.sum()) - N)
        obj = float(eta * (w @ w) + (1.0 - alpha) * T * eps_star + slacks.sum())
        multiplier = -float(res.y[-1])
        dual_obj = float(N) * multiplier - 0.5 * float(x @ (P @ x))
        gap = abs(obj - dual_obj)
        if (
            violation <= _SPLITTING_FEAS_TOL
            and budget_dev <= _SPLITTING_FEAS_TOL * N
            and gap <= _SPLITTING_GAP_TOL * (1.0 + abs(obj))
        ):
            return w, eps_star, slacks, obj, gap, multiplier
    raise NoConvergence(f"splitting solve failed: {last_status}")


def solve_program(returns, alpha, eta, method="auto"):
    """Solve the shortfall program exactly on one return sample.

    returns: raw N x T standard normal draws; the program consumes
    returns / sqrt(N).  Raises Unbounded when eta = 0 and the sample
    admits unbounded gain; raises NoConvergence when the convex solver
    fails to certify optimality.

    method selects the backend: "auto" uses the interior point for
    eta > 0 (retrying once on the splitting route if it fails to
    converge) and the linear solver for eta = 0; "interior-point" and
    "splitting" force their respective routes.  Both forced routes
    need eta > 0; the eta = 0 program is linear and always goes
    through the dedicated simplex route.
    """
    X = np.asarray(returns, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DomainError(f"returns must be a 2D N x T matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DomainError("returns contain non-finite entries")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not eta >= 0.0:
        raise DomainError(f"eta must be nonnegative, got {eta}")
    if method not in ("auto", "interior-point", "splitting"):
        raise DomainError(
            f"method must be 'auto', 'interior-point', or 'splitting', got {method!r}"
        )
    N = X.shape[0]
    Xs = X / math.sqrt(N)
    if method == "splitting":
        if eta == 0.0:
            raise DomainError(
                "the splitting route needs eta > 0 for a certifiable "
                "solve; the eta = 0 program is linear"
            )
        w, eps, u, obj, gap, mult = _solve_qp_splitting(Xs, alpha, eta)
    elif method == "interior-point":
        if eta == 0.0:
            raise DomainError(
                "the interior-point route needs eta > 0; the eta = 0 "
                "program is linear"
            )
        w, eps, u, obj, gap, mult = _solve_qp(Xs, alpha, eta)
    elif eta > 0.0:
        try:
            w, eps, u, obj, gap, mult = _solve_qp(Xs, alpha, eta)
        except NoConvergence:
            w, eps, u, obj, gap, mult = _solve_qp_splitting(Xs, alpha, eta)
    else:
        w, eps, u, obj, gap, mult = _solve_lp(Xs, alpha)
    return MCInstance(
        returns=X,
        weights=w,
        eps_star=eps,
        slacks=u,
        objective=obj,
        duality_gap=gap,
        budget_multiplier=mult,
    )


# -------------------------------------------------------------- observables


def active_scenarios(instance):
    """Indices of scenarios at or beyond the VaR boundary.

    These are the observations whose losses enter the shortfall average;
    the susceptibility probe treats a solve pair as comparable only when
    this set is stable under the tilt.
    """
    X = instance.returns
    N = X.shape[0]
    port = instance.weights @ (X / math.sqrt(N))
    return frozenset(np.flatnonzero(port + instance.eps_star <= _ACTIVE_TOL).tolist())


def es_unit(alpha):
    """In-distribution Expected Shortfall of the equal-weight portfolio.

    The equal-weight portfolio of N assets with independent N(0, 1/N)
    returns has a standard normal loss, whose shortfall at confidence
    alpha is density(quantile(alpha)) / (1 - alpha).
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    z = float(scipy.special.ndtri(alpha))
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) / (1.0 - alpha)


def es_out_analytic(weights, alpha):
    """Out-of-sample Expected Shortfall of a weight vector, in closed form.

    For i.i.d. Gaussian asset returns the portfolio loss is centered
    Gaussian with standard deviation sqrt(||w||^2 / N), so its shortfall
    is that factor times the equal-weight shortfall.  Using the closed
    form instead of a second sample removes one layer of Monte Carlo
    noise.
    """
    w = np.asarray(weights, dtype=float)
    sigma = math.sqrt(float(w @ w) / w.size)
    return sigma * es_unit(alpha)


# ------------------------------------------------------------- replication


def _replicate(cfg, rep_index, probes):
    """One replication: base solve, optionally the two tilted solves.

    Returns (row, changed) where row is [q0, eps, es] (+ delta when
    probes) and changed says whether the tilt materially changed the
    active scenario set; returns (None, False) for an unbounded
    replication.  The probe tilts the scaled returns by +/- xi along a
    random sign vector and projects the weight response back on it; a
    uniform shift would be absorbed exactly by the VaR variable under
    the budget constraint, leaving no signal at finite N.
    """
    N, T, alpha, eta = cfg.n_assets, cfg.n_obs, cfg.alpha, cfg.eta
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, int(rep_index))))
    X = rng.standard_normal((N, T))
    try:
        inst = solve_program(X, alpha, eta)
    except Unbounded:
        return None, False
    w = inst.weights
    row = [
        float(w @ w) / N,
        inst.eps_star,
        inst.eps_star + float(inst.slacks.sum()) / ((1.0 - alpha) * T),
    ]
    if not probes:
        return row, False
    xi = cfg.shift_xi
    v = rng.choice([-1.0, 1.0], size=N)
    tilt = (xi * math.sqrt(N)) * v[:, None]  # +/- xi per asset after scaling
    try:
        plus = solve_program(X + tilt, alpha, eta)
        minus = solve_program(X - tilt, alpha, eta)
    except Unbounded:
        return None, False
    delta = float(v @ (plus.weights - minus.weights)) / (
        2.0 * xi * (1.0 - alpha) * T * N
    )
    row.append(delta)
    s_p = active_scenarios(plus)
    s_m = active_scenarios(minus)
    size = max(len(s_p), len(s_m), 1)
    changed = len(s_p ^ s_m) > 0.5 * size
    return row, changed


def _mean_se(col):
    n = len(col)
    m = float(np.mean(col))
    if n < 2:
        return Estimate(m, math.nan)
    return Estimate(m, float(np.std(col, ddof=1)) / math.sqrt(n))


def _map_replications(cfg, probes, workers):
    """All replications, optionally fanned out over processes.

    Replication k depends only on (seed, k), so the result is identical
    for any worker count; assembly stays in submission order.
    """
    if workers is not None and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        from itertools import repeat

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(
                pool.map(_replicate, repeat(cfg), range(cfg.n_samples), repeat(probes))
            )
    return [_replicate(cfg, k, probes) for k in range(cfg.n_samples)]


def estimate_summary(cfg, susceptibility=True, workers=1):
    """Run all replications and average the observables.

    With susceptibility=True (the default) each replication adds the two
    tilted solves needed for delta_hat; pass False to skip them when
    only q0/VaR/ES are wanted.  Unbounded replications (possible only at
    eta = 0) are counted into feasible_fraction and excluded from the
    averages; if every replication is unbounded the summary is
    impossible and AllUnbounded is raised.  workers > 1 fans the
    replications out over processes without changing any result.
    """
    rows = []
    n_unbounded = 0
    for row, _ in _map_replications(cfg, susceptibility, workers):
        if row is None:
            n_unbounded += 1
        else:
            rows.append(row)
    if not rows:
        raise AllUnbounded(
            f"all {cfg.n_samples} replications were unbounded at eta = 0"
        )
    arr = np.asarray(rows)
    return MCSummary(
        config=cfg,
        q0_hat=_mean_se(arr[:, 0]),
        eps_hat=_mean_se(arr[:, 1]),
        es_in_hat=_mean_se(arr[:, 2]),
        delta_hat=_mean_se(arr[:, 3]) if susceptibility else None,
        feasible_fraction=1.0 - n_unbounded / cfg.n_samples,
        n_feasible=len(rows),
    )


def estimate_susceptibility(cfg, workers=1):
    """Tilt-response susceptibility over replications, with a validity gate.

    The finite difference is trustworthy only while the tilted solves
    stay on the same active scenario set; when the set changes
    materially (symmetric difference above half the set size) in more
    than half of the replications, the tilt is too large for a
    derivative estimate and ShiftTooLarge is raised.
    """
    vals = []
    n_changed = 0
    n_used = 0
    for row, changed in _map_replications(cfg, True, workers):
        if row is None:
            continue
        n_used += 1
        n_changed += int(changed)
        vals.append(row[3])
    if not vals:
        raise AllUnbounded(
            f"all {cfg.n_samples} replications were unbounded at eta = 0"
        )
    if n_changed > 0.5 * n_used:
        raise ShiftTooLarge(
            f"the tilt changed the active scenario set in {n_changed} of "
            f"{n_used} replications; shrink shift_xi below {cfg.shift_xi}"
        )
    return _mean_se(vals)
