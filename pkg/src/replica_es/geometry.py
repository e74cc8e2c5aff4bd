"""Curve tracing over the saddle solver: phase boundary, contours, folds.

All tracers emit polylines of converged saddle solutions.  Contours are
followed by pseudo-arclength continuation in a 2D chart whose second
coordinate is log r (branches span decades in r), so curves with turning
points, where r is not a function of the swept coordinate, are traced
through the fold instead of jumping branches.

Charts:
  iso_q0, iso_delta  ->  (alpha, log r)      at fixed eta
  r_of_eta           ->  (log eta, log r)    at fixed alpha
  phase_boundary     ->  (alpha, r)          at eta = 0

"Corrector iterations" below always counts root-finder steps along the
normal line, not inner Newton steps of the saddle solver.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainError,
    InfeasibleRegion,
    LevelUnreachable,
    NoConvergence,
    NoTurningPoint,
    TruncatedNearOne,
)
from .saddle import ProblemParams, solve_reduced

__all__ = [
    "CurveSpec",
    "CurveResult",
    "trace_phase_boundary",
    "trace_iso_q0",
    "trace_iso_delta",
    "trace_r_of_eta",
    "transition_width",
    "branch_labels",
    "ALPHA_NEAR_ONE_LIMIT",
]

# Confidence levels beyond this are flagged as unresolvable: the boundary
# flattens with all derivatives vanishing, so tracers truncate rather than
# extrapolate.
ALPHA_NEAR_ONE_LIMIT = 0.9995

_R_FLOOR = 1e-8
_R_CEIL = 1e4
_LEVEL_TOL = 1e-8        # corrector target, under the public 1e-6 contract
_BIG = 1e6               # level-function value where no finite saddle exists
_Q_THRESHOLDS = (1e6, 1e7, 1e8)
_FD_STEP = 1e-5
_ETA_FOLD_MARGIN = 3.0   # log-eta slack past the range while crossing a fold


@dataclass(frozen=True)
class CurveSpec:
    """What to trace.

    kind:  one of phase_boundary, iso_q0, iso_delta, r_of_eta
    level: target sqrt(q0) or delta (None for phase_boundary)
    alpha / eta: the fixed parameter (which one depends on kind)
    coord_range: closed interval of the swept coordinate (alpha or eta)
    max_step / min_step: continuation step bounds in chart units
    """

    kind: str
    level: float = None
    alpha: float = None
    eta: float = None
    coord_range: tuple = None
    max_step: float = 0.1
    min_step: float = 1e-5

    def __post_init__(self):
        if self.kind not in ("phase_boundary", "iso_q0", "iso_delta", "r_of_eta"):
            raise DomainError(f"unknown curve kind {self.kind!r}")
        if self.level is not None and not self.level > 0.0:
            raise DomainError(f"level must be positive, got {self.level}")
        if self.coord_range is not None:
            lo, hi = self.coord_range
            if not lo < hi:
                raise DomainError(f"empty coordinate range {self.coord_range}")
        if not self.min_step <= self.max_step:
            raise DomainError("min_step must not exceed max_step")


@dataclass(frozen=True)
class CurveResult:
    """A traced polyline.

    points: ordered tuple of ((coord1, coord2), ReducedSolution) where the
            coordinate pair is (alpha, r) for contours and the boundary,
            (eta, r) for r_of_eta curves.
    turning_points: indices of points where the swept coordinate reverses.
    status: "complete" or "truncated:<reason>".

    Consecutive points sit within max_step of each other in chart
    arclength, with one exception: when a contour's two branches cannot
    be joined through their fold (status "truncated:near-one"), the
    polyline jumps from the clipped lower branch to the upper branch
    along the range's high edge, and that single flagged junction is the
    one point pair allowed to exceed max_step.
    """

    spec: CurveSpec
    points: tuple
    turning_points: tuple
    status: str


class _LevelField:
    """Level function over a chart, with warm-started saddle solves."""

    def __init__(self, kind, level, alpha=None, eta=None):
        self.kind = kind
        self.level = level
        self.alpha = alpha
        self.eta = eta
        self._warm = None

    def params(self, y):
        if self.kind == "r_of_eta":
            return ProblemParams(self.alpha, math.exp(y[1]), math.exp(y[0]))
        return ProblemParams(y[0], math.exp(y[1]), self.eta)

    def solve(self, y):
        p = self.params(y)
        try:
            sol = solve_reduced(p, init=self._warm)
        except NoConvergence:
            sol = solve_reduced(p)  # cold retry before giving up
        self._warm = (sol.q0, sol.delta, sol.epsilon)
        return sol

    def value(self, y):
        """(level mismatch, solution); mismatch is +_BIG where no saddle exists.

        DomainError covers probe points outside the parameter domain
        (continuation probes can overshoot alpha past 1), OverflowError
        wild chart coordinates; both read as "nothing here", shrinking
        the step rather than aborting the trace.
        """
        try:
            sol = self.solve(y)
        except (InfeasibleRegion, NoConvergence, DomainError, OverflowError):
            return _BIG, None
        if self.kind == "iso_delta":
            return sol.delta - self.level, sol
        return math.sqrt(sol.q0) - self.level, sol


def _tangent(field, y, prev=None, sweep_positive=True):
    """Unit tangent of the level set at y from a forward-difference gradient."""
    l0, _ = field.value(y)
    la, _ = field.value((y[0] + _FD_STEP, y[1]))
    lr, _ = field.value((y[0], y[1] + _FD_STEP))
    grad = ((la - l0) / _FD_STEP, (lr - l0) / _FD_STEP)
    tau = (grad[1], -grad[0])
    norm = math.hypot(*tau)
    if norm == 0.0:
        return None
    tau = (tau[0] / norm, tau[1] / norm)
    if prev is not None:
        if tau[0] * prev[0] + tau[1] * prev[1] < 0.0:
            tau = (-tau[0], -tau[1])
    elif (tau[0] > 0.0) != sweep_positive:
        tau = (-tau[0], -tau[1])
    return tau


def _correct(field, pred, normal, h):
    """Secant root-find for the level equation along the normal line.

    Returns (point, solution, iterations) or None on failure; iterations
    is the number of secant steps taken.
    """
    def at(s):
        return (pred[0] + s * normal[0], pred[1] + s * normal[1])

    s_prev, s_cur = 0.0, None
    l_prev, sol_prev = field.value(at(0.0))
    if abs(l_prev) <= _LEVEL_TOL and sol_prev is not None:
        return at(0.0), sol_prev, 0
    # probe for a second point on the secant
    for trial in (0.25 * h, -0.25 * h, h, -h):
        l_t, sol_t = field.value(at(trial))
        if l_t < _BIG:
            s_cur, l_cur, sol_cur = trial, l_t, sol_t
            break
    else:
        return None
    for it in range(1, 13):
        if abs(l_cur) <= _LEVEL_TOL and sol_cur is not None:
            return at(s_cur), sol_cur, it
        denom = l_cur - l_prev
        if denom == 0.0 or not math.isfinite(denom):
            return None
        s_next = s_cur - l_cur * (s_cur - s_prev) / denom
        if not math.isfinite(s_next) or abs(s_next) > 4.0 * h:
            return None
        l_next, sol_next = field.value(at(s_next))
        s_prev, l_prev = s_cur, l_cur
        s_cur, l_cur, sol_cur = s_next, l_next, sol_next
    return None


def _coords(field, y):
    if field.kind == "r_of_eta":
        return (math.exp(y[0]), math.exp(y[1]))
    return (y[0], math.exp(y[1]))


def _find_start(field, sweep_lo, sweep_hi, seek_from_lo=True):
    """Locate a first point on the level set, preferring the low sweep end.

    Scans log r at a ladder of sweep values and takes the lowest-r sign
    change (the data-dominated branch).  The first pass brackets only
    between solvable points: at very small r the solver's attainable
    residual degrades, and reading those failures as "level exceeded"
    would fabricate a crossing at the edge of the failed patch.  The
    second pass restores that reading so a level band narrower than the
    grid spacing, squeezed against the feasibility boundary, is still
    caught.
    """
    fracs = (0.0, 0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0)
    if not seek_from_lo:
        fracs = tuple(1.0 - f for f in fracs)
    rho_grid = np.linspace(math.log(1e-6), math.log(min(_R_CEIL, 100.0)), 90)
    for solvable_only in (True, False):
        for f in fracs:
            c = sweep_lo + f * (sweep_hi - sweep_lo)
            prev_l = None
            prev_rho = None
            for rho in rho_grid:
                l, _ = field.value((c, rho))
                l_eff = min(l, _BIG)
                if solvable_only and l_eff >= _BIG:
                    continue
                if prev_l is not None and prev_l < 0.0 <= l_eff:
                    try:
                        root = brentq(
                            lambda x: min(field.value((c, x))[0], _BIG),
                            prev_rho, rho, xtol=1e-13, rtol=8.9e-16,
                        )
                    except ValueError:
                        #  warm-start drift flipped an endpoint reading
                        root = None
                    if root is not None:
                        lval, sol = field.value((c, root))
                        if sol is not None and abs(lval) <= 1e-6:
                            return (c, root), sol
                prev_l, prev_rho = l_eff, rho
    raise LevelUnreachable(
        f"no point with level {field.level} found in the requested range"
    )


def _clip_to_bound(field, y_in, y_out, bound):
    """Intersect the segment crossing a sweep bound with the level set."""
    lo = min(y_in[1], y_out[1]) - 0.05
    hi = max(y_in[1], y_out[1]) + 0.05

    def fn(rho):
        return min(field.value((bound, rho))[0], _BIG)

    try:
        f_lo, f_hi = fn(lo), fn(hi)
        if f_lo * f_hi > 0.0:
            return None
        root = brentq(fn, lo, hi, xtol=1e-13, rtol=8.9e-16)
    except ValueError:
        return None
    lval, sol = field.value((bound, root))
    if sol is None or abs(lval) > 1e-6:
        return None
    return (bound, root), sol


def _edge_root_count(field, edge):
    """Number of level-set crossings along log r at a fixed sweep value.

    Two crossings at the high end of the sweep range mean the curve folds
    back beyond it, so both branches pierce that edge and the trace must
    pass through rather than clip there.
    """
    rho_grid = np.linspace(math.log(1e-6), math.log(_R_CEIL), 120)
    count = 0
    prev = None
    for rho in rho_grid:
        l, _ = field.value((edge, rho))
        if l >= _BIG:
            prev = None  # infeasible gap breaks sign tracking
            continue
        if prev is not None and (l > 0.0) != (prev > 0.0):
            count += 1
        prev = l
    return count


def _find_upper_at_edge(field, edge):
    """Highest-r level crossing at a fixed sweep value, or None.

    Used to restart the continuation on the bias-dominated branch when
    the fold connecting the branches is numerically out of reach.
    """
    rho_grid = np.linspace(math.log(_R_CEIL), math.log(1e-6), 120)
    prev_l = None
    prev_rho = None
    for rho in rho_grid:
        l, _ = field.value((edge, rho))
        if l >= _BIG:
            prev_l = None
            continue
        if prev_l is not None and (l > 0.0) != (prev_l > 0.0):
            root = brentq(
                lambda x: min(field.value((edge, x))[0], _BIG),
                min(prev_rho, rho), max(prev_rho, rho),
                xtol=1e-13, rtol=8.9e-16,
            )
            lval, sol = field.value((edge, root))
            if sol is not None and abs(lval) <= 1e-6:
                return (edge, root), sol
            return None
        prev_l, prev_rho = l, rho
    return None


def _turning_indices(chart_points):
    diffs = [b[0] - a[0] for a, b in zip(chart_points[:-1], chart_points[1:])]
    idx = []
    last_sign = 0
    for i, d in enumerate(diffs):
        s = (d > 0) - (d < 0)
        if s == 0:
            continue
        if last_sign and s != last_sign:
            idx.append(i)
        last_sign = s
    return tuple(idx)


def _trace_level_curve(spec, field, max_points=4000):
    sweep_lo, sweep_hi = spec.coord_range
    is_iso = spec.kind in ("iso_q0", "iso_delta")
    wall = ALPHA_NEAR_ONE_LIMIT if is_iso else sweep_hi + _ETA_FOLD_MARGIN

    # When both branches pierce the high edge, the fold sits beyond the
    # requested range; the trace then passes through that edge and follows
    # the connected curve around the fold instead of clipping there, so
    # one polyline still carries both branches.
    passthrough = False
    if (is_iso and (field.eta or 0.0) > 0.0) or spec.kind == "r_of_eta":
        edge = min(sweep_hi, wall) if is_iso else sweep_hi
        passthrough = _edge_root_count(field, edge) >= 2

    y0, sol0 = _find_start(field, sweep_lo, sweep_hi)
    chart = [y0]
    sols = [sol0]
    tau = _tangent(field, y0, sweep_positive=True)
    if tau is None:
        raise LevelUnreachable("level-set tangent vanished at the start point")
    h = spec.max_step / 4.0
    status = "complete"
    unresolved = "truncated:near-one" if is_iso else "truncated:fold-beyond-range"
    restarted = False

    def restart_on_upper_branch():
        # The fold excursion beyond the high edge failed: the branches do
        # not reconnect within numerical reach.  Drop the excursion, clip
        # the lower branch at the edge, and relaunch the continuation on
        # the upper branch at the same edge, heading back down the sweep.
        nonlocal tau, h, status, passthrough, restarted
        j = len(chart) - 1
        while j >= 0 and chart[j][0] > sweep_hi:
            j -= 1
        if j < 0:
            return False
        beyond = chart[j + 1] if j + 1 < len(chart) else None
        del chart[j + 1:]
        del sols[j + 1:]
        if beyond is not None:
            clipped = _clip_to_bound(field, chart[j], beyond, sweep_hi)
            if clipped is not None:
                chart.append(clipped[0])
                sols.append(clipped[1])
        upper = _find_upper_at_edge(field, sweep_hi)
        if upper is None:
            return False
        tau_up = _tangent(field, upper[0], sweep_positive=False)
        if tau_up is None:
            return False
        chart.append(upper[0])
        sols.append(upper[1])
        tau = tau_up
        h = spec.max_step / 4.0
        status = unresolved
        passthrough = False
        restarted = True
        return True

    while len(chart) < max_points:
        y = chart[-1]
        pred = (y[0] + h * tau[0], y[1] + h * tau[1])
        normal = (-tau[1], tau[0])
        res = _correct(field, pred, normal, h)
        if res is not None:
            y_new, sol_new, iters = res
            gap = math.hypot(y_new[0] - y[0], y_new[1] - y[1])
            if gap > spec.max_step:
                res = None
        if res is None:
            if h <= spec.min_step:
                if passthrough and not restarted and y[0] > sweep_hi:
                    if restart_on_upper_branch():
                        continue
                status = "truncated:stalled"
                break
            h = max(h / 2.0, spec.min_step)
            continue
        out_hi = y_new[0] > sweep_hi
        out_lo = y_new[0] < sweep_lo
        if out_hi and passthrough:
            if y_new[0] > wall:
                # out of room before the fold closed the loop back
                if not restarted and restart_on_upper_branch():
                    continue
                status = unresolved
                break
            # inside the wall: follow the fold arc beyond the range edge
        elif out_hi or out_lo:
            bound = sweep_hi if out_hi else sweep_lo
            clipped = _clip_to_bound(field, y, y_new, bound)
            if clipped is not None:
                chart.append(clipped[0])
                sols.append(clipped[1])
            break
        if y_new[1] > math.log(_R_CEIL) or y_new[1] < math.log(_R_FLOOR):
            if passthrough and not restarted and y_new[0] > sweep_hi:
                if restart_on_upper_branch():
                    continue
            status = "truncated:r-range"
            break
        chart.append(y_new)
        sols.append(sol_new)
        if iters > 5:
            h = max(h / 2.0, spec.min_step)
        elif iters <= 2:
            h = min(2.0 * h, spec.max_step)
        tau_new = _tangent(field, y_new, prev=tau)
        if tau_new is not None:
            tau = tau_new
    else:
        status = "truncated:max-points"

    points = tuple((_coords(field, y), s) for y, s in zip(chart, sols))
    return CurveResult(
        spec=spec,
        points=points,
        turning_points=_turning_indices(chart),
        status=status,
    )


def trace_iso_q0(level_sqrt_q0, eta, alpha_range, max_step=0.1, min_step=1e-5):
    """Trace the contour sqrt(q0)(alpha, r) = level at fixed eta.

    At eta = 0 the contour is a single branch inside the feasible region;
    at eta > 0 it has a lower (data-dominated) and an upper
    (bias-dominated) branch connected through a turning point, and both
    are traced in one pass through the fold.

    alpha_range bounds where the trace starts and ends.  When the fold
    sits just beyond its high end (both branches cross that edge), the
    trace follows the connected curve through the fold and back rather
    than clipping, so the result still carries both branches; the points
    on the fold arc then exceed the high end of the range.  When the
    connection lies past the near-one resolution limit instead (close to
    alpha = 1 the data-dominated branch collapses toward r = 0 and the
    join cannot be resolved), the trace clips the lower branch at the
    range edge, restarts on the upper branch at that edge, and returns
    it in the same polyline; the junction is then flagged both by the
    status "truncated:near-one" and by a turning index at the jump.
    """
    if not level_sqrt_q0 > 1.0:
        raise DomainError(f"level_sqrt_q0 must exceed 1, got {level_sqrt_q0}")
    if not eta >= 0.0:
        raise DomainError(f"eta must be nonnegative, got {eta}")
    lo, hi = _check_alpha_range(alpha_range)
    spec = CurveSpec(
        kind="iso_q0", level=level_sqrt_q0, eta=eta, coord_range=(lo, hi),
        max_step=max_step, min_step=min_step,
    )
    field = _LevelField("iso_q0", level_sqrt_q0, eta=eta)
    return _trace_level_curve(spec, field)


def trace_iso_delta(level_delta, eta, alpha_range, max_step=0.1, min_step=1e-5):
    """Trace the contour delta(alpha, r) = level at fixed eta."""
    if not level_delta > 0.0:
        raise DomainError(f"level_delta must be positive, got {level_delta}")
    if not eta >= 0.0:
        raise DomainError(f"eta must be nonnegative, got {eta}")
    lo, hi = _check_alpha_range(alpha_range)
    spec = CurveSpec(
        kind="iso_delta", level=level_delta, eta=eta, coord_range=(lo, hi),
        max_step=max_step, min_step=min_step,
    )
    field = _LevelField("iso_delta", level_delta, eta=eta)
    return _trace_level_curve(spec, field)


def trace_r_of_eta(alpha, level_sqrt_q0, eta_range, max_step=0.1, min_step=1e-5):
    """Trace r against eta at fixed alpha along sqrt(q0) = level.

    Starts on the almost-horizontal lower branch at small eta, follows the
    curve through its turning point, and returns along the steep upper
    branch, so a single result carries both r roots for each eta below
    the fold.  A fold lying moderately beyond the high end of eta_range
    is still crossed (the trace passes through the edge and returns);
    if it lies further out than a fixed log-eta margin the trace stops
    with status "truncated:fold-beyond-range".
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not level_sqrt_q0 > 1.0:
        raise DomainError(f"level_sqrt_q0 must exceed 1, got {level_sqrt_q0}")
    e_lo, e_hi = eta_range
    if not (0.0 < e_lo < e_hi):
        raise DomainError(f"eta range must satisfy 0 < lo < hi, got {eta_range}")
    spec = CurveSpec(
        kind="r_of_eta", level=level_sqrt_q0, alpha=alpha,
        coord_range=(math.log(e_lo), math.log(e_hi)),
        max_step=max_step, min_step=min_step,
    )
    field = _LevelField("r_of_eta", level_sqrt_q0, alpha=alpha)
    return _trace_level_curve(spec, field)


def _check_alpha_range(alpha_range):
    lo, hi = alpha_range
    if not (0.0 < lo < hi < 1.0):
        raise DomainError(f"alpha range must satisfy 0 < lo < hi < 1, got {alpha_range}")
    return lo, hi


# ---------------------------------------------------------------- boundary


def _boundary_probe(alpha, r, warm):
    """q0 at (alpha, r, eta=0), +inf where the saddle diverges."""
    p = ProblemParams(alpha, r, 0.0)
    try:
        sol = solve_reduced(p, init=warm[0])
    except InfeasibleRegion:
        return math.inf, None
    except NoConvergence:
        try:
            sol = solve_reduced(p)
        except (InfeasibleRegion, NoConvergence):
            return math.inf, None
    warm[0] = (sol.q0, sol.delta, sol.epsilon)
    return sol.q0, sol


def _boundary_point(alpha, tol, r_hint):
    """r_c(alpha) by bisection on q0 threshold crossings plus extrapolation.

    Bisects the r where q0 crosses each of 1e6, 1e7, 1e8, then removes
    the finite-threshold offset by geometric extrapolation of the three
    crossings (the spacing between successive crossings contracts by a
    nearly constant factor per decade of q0).  Also returns the converged
    solution just below the last threshold.
    """
    warm = [None]
    lo = r_hint * 0.5
    q_lo, sol_lo = _boundary_probe(alpha, lo, warm)
    while not (q_lo < _Q_THRESHOLDS[0]):
        lo *= 0.5
        if lo < 1e-8:
            raise NoConvergence(f"no feasible r found below the boundary at alpha={alpha}")
        q_lo, sol_lo = _boundary_probe(alpha, lo, warm)
    hi = max(r_hint * 1.25, lo * 2.0)
    q_hi, _ = _boundary_probe(alpha, hi, warm)
    while q_hi < _Q_THRESHOLDS[-1]:
        hi *= 1.5
        if hi > 2.0:
            break
        q_hi, _ = _boundary_probe(alpha, hi, warm)

    crossings = []
    last_sub = (lo, sol_lo)
    rtol = max(tol * 1e-2, 1e-12)
    for q_target in _Q_THRESHOLDS:
        a, b = lo, hi
        while b - a > rtol:
            mid = 0.5 * (a + b)
            q_mid, sol_mid = _boundary_probe(alpha, mid, warm)
            if q_mid < q_target:
                a = mid
                if sol_mid is not None:
                    last_sub = (mid, sol_mid)
            else:
                b = mid
        crossings.append(0.5 * (a + b))
        lo = a  # the next threshold crossing sits above this one

    r1, r2, r3 = crossings
    d1, d2 = r2 - r1, r3 - r2
    if d1 > 0.0 and 0.0 < d2 < d1:
        ratio = d2 / d1
        r_c = r3 + d2 * ratio / (1.0 - ratio)
    else:
        r_c = r3
    return r_c, last_sub[1]


def trace_phase_boundary(alpha_range, tol=1e-6, max_step=0.05):
    """Locate the eta = 0 feasibility boundary r_c(alpha) over a range.

    Works on a grid uniform in log(1 - alpha), refined until consecutive
    points differ by at most max_step in both coordinates.  Ranges
    reaching past the near-one resolution limit are truncated and
    flagged; a range lying entirely past it raises TruncatedNearOne.
    """
    lo, hi = _check_alpha_range(alpha_range)
    truncated = False
    if lo >= ALPHA_NEAR_ONE_LIMIT:
        raise TruncatedNearOne(
            f"the whole range {alpha_range} lies beyond the resolvable "
            f"limit {ALPHA_NEAR_ONE_LIMIT}"
        )
    if hi > ALPHA_NEAR_ONE_LIMIT:
        hi = ALPHA_NEAR_ONE_LIMIT
        truncated = True

    def grid_points(n):
        # uniform in log(1 - alpha), denser toward 1
        return list(1.0 - np.geomspace(1.0 - lo, 1.0 - hi, n))

    alphas = grid_points(17)
    cache = {}

    def rc_at(a):
        if a not in cache:
            hint = 0.1
            done = [x for x in cache if x < a]
            if done:
                hint = cache[max(done)][0]
            cache[a] = _boundary_point(a, tol, hint)
        return cache[a]

    for a in alphas:
        rc_at(a)

    for _ in range(6):
        inserts = []
        for a, b in zip(alphas[:-1], alphas[1:]):
            if (b - a) > max_step or abs(rc_at(b)[0] - rc_at(a)[0]) > max_step:
                inserts.append(1.0 - math.sqrt((1.0 - a) * (1.0 - b)))
        if not inserts or len(alphas) + len(inserts) > 120:
            break
        alphas = sorted(alphas + inserts)
        for a in inserts:
            rc_at(a)

    spec = CurveSpec(
        kind="phase_boundary", coord_range=(lo, hi), max_step=max_step,
        min_step=1e-6,
    )
    points = tuple(((a, cache[a][0]), cache[a][1]) for a in alphas)
    return CurveResult(
        spec=spec,
        points=points,
        turning_points=(),
        status="truncated:near-one" if truncated else "complete",
    )


# ------------------------------------------------------------ postprocess


def branch_labels(curve):
    """Per-point branch classification.

    phase boundary -> "boundary"; curves without a fold -> "single";
    folded curves -> "lower" before the first turning point, "turning" at
    it, "upper" after.
    """
    n = len(curve.points)
    if curve.spec.kind == "phase_boundary":
        return ("boundary",) * n
    if not curve.turning_points:
        return ("single",) * n
    k = curve.turning_points[0]
    labels = []
    for i in range(n):
        if i < k:
            labels.append("lower")
        elif i == k:
            labels.append("turning")
        else:
            labels.append("upper")
    return tuple(labels)


def transition_width(curve):
    """Width r_upper / r_lower of the trade-off zone of an r-vs-eta curve.

    Each branch of the fold ends in a scaling regime with its own
    limiting log-log slope: the lower branch flattens out (slope near 0),
    the upper branch settles onto a steep power law (slope near -2 for
    the traced examples).  The trade-off zone around the turning point is
    where the curve belongs to neither regime; walking away from the
    turning point along each branch, the branch point is the first
    polyline vertex whose segment slope d(log r)/d(log eta) comes within
    0.5 of that branch's limiting slope, and the width is the ratio of
    the two branch-point r values.  The limiting slope is estimated from
    the outermost fifth of the branch, so on the almost-horizontal lower
    branch this reduces to a plain |slope| <= 0.5 test.  A branch too
    short to leave the fold region falls back to its end point.  Pure
    post-processing of the traced polyline.
    """
    if curve.spec.kind != "r_of_eta":
        raise DomainError("transition_width applies to r_of_eta curves")
    if not curve.turning_points:
        raise NoTurningPoint("the curve has no fold")
    k = curve.turning_points[0]
    coords = [pt[0] for pt in curve.points]
    mu = [math.log(c[0]) for c in coords]
    rho = [math.log(c[1]) for c in coords]

    def slope(i):
        dmu = mu[i + 1] - mu[i]
        if dmu == 0.0:
            return math.inf
        return (rho[i + 1] - rho[i]) / dmu

    def tail_slope(seg_indices):
        # limiting slope from the outermost fifth of the branch
        tail = seg_indices[-max(5, len(seg_indices) // 5):]
        vals = sorted(slope(i) for i in tail)
        return vals[len(vals) // 2]

    def branch_vertex(seg_indices, vertex_of, fallback_vertex):
        finite = [i for i in seg_indices if math.isfinite(slope(i))]
        if len(finite) < 2:
            return fallback_vertex
        s_inf = tail_slope(finite)
        for i in seg_indices:
            if abs(slope(i) - s_inf) <= 0.5:
                return vertex_of(i)
        return fallback_vertex

    # segment i joins vertices i and i+1; walk each branch away from the fold
    lower_segs = list(range(k - 1, -1, -1))
    upper_segs = list(range(k, len(coords) - 1))
    if not lower_segs or not upper_segs:
        raise NoTurningPoint("the fold sits at the very end of the trace")
    # branch point = the segment vertex nearer the fold
    r_lower = coords[branch_vertex(lower_segs, lambda i: i + 1, 0)][1]
    r_upper = coords[branch_vertex(upper_segs, lambda i: i, len(coords) - 1)][1]
    return r_upper / r_lower
