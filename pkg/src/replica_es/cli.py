"""Command-line front end.

Four subcommands: ``solve`` for a single reduced solve, ``curve`` for
contour and fold traces, ``mc`` for Monte Carlo comparison runs, and
``figure`` for the canned multi-curve data sets.  Tables go to stdout or
``--output``; ``figure`` writes a directory of CSV files plus a manifest.

Every documented error class maps to a fixed process exit code (see
EXIT_CODES); 0 is success, 2 is reserved for usage and domain errors so
it matches the option-parsing convention.  The environment variable
``REPLICA_ES_LOG`` sets the log level (DEBUG, INFO, WARNING, ERROR); no
other environment coupling exists.
"""

import logging
import os
import sys
from dataclasses import dataclass

import click

from . import __version__
from .errors import (
    AllUnbounded,
    DomainError,
    InfeasibleLift,
    InfeasibleRegion,
    LevelUnreachable,
    NoConvergence,
    NonConvexPotential,
    NoTurningPoint,
    QuadratureFailure,
    ReplicaESError,
    ShiftTooLarge,
    TruncatedNearOne,
    Unbounded,
)
from .geometry import (
    trace_iso_delta,
    trace_iso_q0,
    trace_phase_boundary,
    trace_r_of_eta,
)
from .io_formats import (
    CURVE_COLUMNS,
    MC_COLUMNS,
    MC_COMPARE_COLUMNS,
    SOLVE_COLUMNS,
    build_manifest,
    curve_records,
    mc_record,
    render_manifest,
    render_table,
    solve_record,
)
from .mc import MCConfig, MCSummary, estimate_summary
from .saddle import ProblemParams, solve_reduced

log = logging.getLogger(__name__)

EXIT_CODES = {
    DomainError: 2,
    NoConvergence: 3,
    InfeasibleRegion: 4,
    LevelUnreachable: 5,
    NoTurningPoint: 6,
    TruncatedNearOne: 7,
    Unbounded: 8,
    AllUnbounded: 9,
    ShiftTooLarge: 10,
    InfeasibleLift: 11,
    NonConvexPotential: 12,
    QuadratureFailure: 13,
    ReplicaESError: 19,
}


def exit_code_for(exc):
    """Fixed exit code of an error instance (most specific class wins)."""
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return 1


def _fail(exc):
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(exit_code_for(exc))


def _emit(text, output):
    if output is None:
        click.echo(text, nl=False)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", output)


_output_opt = click.option(
    "--output", type=click.Path(dir_okay=False), default=None,
    help="Write the table to this file instead of stdout.",
)
_format_opt = click.option(
    "--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
    show_default=True, help="Table format.",
)


@click.group()
@click.version_option(__version__)
def main():
    """Saddle-point solver and Monte Carlo lab for regularized shortfall
    portfolios."""
    level = os.environ.get("REPLICA_ES_LOG", "").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("solve")
@click.option("--alpha", type=float, required=True, help="Confidence level in (0, 1).")
@click.option("--r", "r", type=float, required=True, help="Aspect ratio N/T, > 0.")
@click.option("--eta", type=float, default=0.0, show_default=True,
              help="Regularizer amplitude, >= 0.")
@_output_opt
@_format_opt
def cmd_solve(alpha, r, eta, output, fmt):
    """Solve the reduced system at one parameter point."""
    try:
        sol = solve_reduced(ProblemParams(alpha, r, eta))
    except ReplicaESError as exc:
        _fail(exc)
    log.info("solved alpha=%g r=%g eta=%g in %d iterations", alpha, r, eta,
             sol.iterations)
    _emit(render_table(SOLVE_COLUMNS, [solve_record(sol)], fmt), output)


@main.group("curve")
def cmd_curve():
    """Trace a contour, fold curve, or the feasibility boundary."""


def _emit_curve(trace, output, fmt):
    try:
        curve = trace()
    except DomainError as exc:
        _fail(exc)
    except ReplicaESError as exc:
        # a run that found nothing still leaves a parseable empty table
        status = f"error:{type(exc).__name__}: {exc}"
        _emit(render_table(CURVE_COLUMNS, [], fmt, status=status), output)
        _fail(exc)
    log.info("traced %d points, status %s", len(curve.points), curve.status)
    _emit(
        render_table(CURVE_COLUMNS, curve_records(curve), fmt, status=curve.status),
        output,
    )


_max_step_opt = click.option(
    "--max-step", type=float, default=0.1, show_default=True,
    help="Largest continuation step in chart units.",
)
_min_step_opt = click.option(
    "--min-step", type=float, default=1e-5, show_default=True,
    help="Smallest continuation step before giving up.",
)


@cmd_curve.command("iso-q0")
@click.option("--level", type=float, required=True,
              help="Contour level for sqrt(q0), > 1.")
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--alpha-min", type=float, default=0.6, show_default=True)
@click.option("--alpha-max", type=float, default=0.99, show_default=True)
@_max_step_opt
@_min_step_opt
@_output_opt
@_format_opt
def curve_iso_q0(level, eta, alpha_min, alpha_max, output, fmt, max_step, min_step):
    """Contour of fixed root-mean-square weight (estimation error)."""
    _emit_curve(
        lambda: trace_iso_q0(level, eta, (alpha_min, alpha_max),
                             max_step=max_step, min_step=min_step),
        output, fmt,
    )


@cmd_curve.command("iso-delta")
@click.option("--level", type=float, required=True,
              help="Contour level for the susceptibility, > 0.")
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--alpha-min", type=float, default=0.6, show_default=True)
@click.option("--alpha-max", type=float, default=0.99, show_default=True)
@_max_step_opt
@_min_step_opt
@_output_opt
@_format_opt
def curve_iso_delta(level, eta, alpha_min, alpha_max, output, fmt, max_step,
                    min_step):
    """Contour of fixed weight susceptibility."""
    _emit_curve(
        lambda: trace_iso_delta(level, eta, (alpha_min, alpha_max),
                                max_step=max_step, min_step=min_step),
        output, fmt,
    )


@cmd_curve.command("r-of-eta")
@click.option("--alpha", type=float, required=True)
@click.option("--level", type=float, required=True,
              help="sqrt(q0) level the curve holds fixed, > 1.")
@click.option("--eta-min", type=float, default=1e-4, show_default=True)
@click.option("--eta-max", type=float, default=3.0, show_default=True)
@_max_step_opt
@_min_step_opt
@_output_opt
@_format_opt
def curve_r_of_eta(alpha, level, eta_min, eta_max, output, fmt, max_step, min_step):
    """Aspect ratio against regularizer amplitude at fixed error level."""
    _emit_curve(
        lambda: trace_r_of_eta(alpha, level, (eta_min, eta_max),
                               max_step=max_step, min_step=min_step),
        output, fmt,
    )


@cmd_curve.command("phase-boundary")
@click.option("--alpha-min", type=float, default=0.6, show_default=True)
@click.option("--alpha-max", type=float, default=0.999, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True,
              help="Bisection tolerance on the critical ratio.")
@click.option("--max-step", type=float, default=0.05, show_default=True)
@_output_opt
@_format_opt
def curve_phase_boundary(alpha_min, alpha_max, tol, max_step, output, fmt):
    """Critical aspect ratio of the unregularized problem."""
    _emit_curve(
        lambda: trace_phase_boundary((alpha_min, alpha_max), tol=tol,
                                     max_step=max_step),
        output, fmt,
    )


@main.command("mc")
@click.option("--n-assets", type=int, required=True)
@click.option("--n-obs", type=int, required=True)
@click.option("--alpha", type=float, required=True)
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--n-samples", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=12345, show_default=True)
@click.option("--shift-xi", type=float, default=1e-3, show_default=True,
              help="Tilt size for the susceptibility probe.")
@click.option("--compare/--no-compare", default=False,
              help="Add predicted values and z-scores from the reduced solve.")
@click.option("--susceptibility/--no-susceptibility", default=True,
              help="Estimate the tilt response (3 solves per replication).")
@click.option("--workers", type=int, default=None,
              help="Process pool size for replications [default: CPU count].")
@_output_opt
@_format_opt
def cmd_mc(n_assets, n_obs, alpha, eta, n_samples, seed, shift_xi, compare,
           susceptibility, workers, output, fmt):
    """Sample finite instances, solve them exactly, average the observables."""
    workers = workers or os.cpu_count() or 1
    try:
        cfg = MCConfig(
            n_assets=n_assets, n_obs=n_obs, alpha=alpha, eta=eta,
            n_samples=n_samples, seed=seed, shift_xi=shift_xi,
        )
    except ReplicaESError as exc:
        _fail(exc)
    columns = MC_COMPARE_COLUMNS if compare else MC_COLUMNS
    replica = None
    if compare:
        try:
            replica = solve_reduced(ProblemParams(alpha, n_assets / n_obs, eta))
        except ReplicaESError as exc:
            _fail(exc)
    try:
        summary = estimate_summary(cfg, susceptibility=susceptibility,
                                   workers=workers)
    except AllUnbounded as exc:
        empty = MCSummary(
            config=cfg, q0_hat=None, eps_hat=None, es_in_hat=None,
            delta_hat=None, feasible_fraction=0.0, n_feasible=0,
        )
        status = f"error:{type(exc).__name__}: {exc}"
        _emit(render_table(columns, [mc_record(empty, replica)], fmt,
                           status=status), output)
        _fail(exc)
    except ReplicaESError as exc:
        _fail(exc)
    log.info("feasible %d/%d replications", summary.n_feasible, cfg.n_samples)
    _emit(render_table(columns, [mc_record(summary, replica)], fmt), output)


# --------------------------------------------------------------- figures


@dataclass(frozen=True)
class FigureRun:
    """One curve of a figure: output file name, tracer kind, parameters."""

    name: str
    kind: str
    params: tuple

    def trace(self):
        p = dict(self.params)
        if self.kind == "phase_boundary":
            return trace_phase_boundary((p["alpha_min"], p["alpha_max"]),
                                        tol=p.get("tol", 1e-6))
        if self.kind == "iso_q0":
            return trace_iso_q0(p["level"], p["eta"],
                                (p["alpha_min"], p["alpha_max"]))
        if self.kind == "iso_delta":
            return trace_iso_delta(p["level"], p["eta"],
                                   (p["alpha_min"], p["alpha_max"]))
        if self.kind == "r_of_eta":
            return trace_r_of_eta(p["alpha"], p["level"],
                                  (p["eta_min"], p["eta_max"]))
        raise DomainError(f"unknown figure run kind {self.kind!r}")


@dataclass(frozen=True)
class FigureRecipe:
    """A figure's worth of curves plus its recorded non-paper choices."""

    figure_id: str
    runs: tuple
    non_paper_choices: tuple = ()


def _iso_family(eta, levels, alpha_min, alpha_max, prefix):
    return tuple(
        FigureRun(
            name=f"{prefix}_level{level:g}.csv",
            kind="iso_q0" if prefix.startswith("q0") else "iso_delta",
            params=(
                ("level", level), ("eta", eta),
                ("alpha_min", alpha_min), ("alpha_max", alpha_max),
            ),
        )
        for level in levels
    )


_Q0_LEVELS = (1.01, 1.05, 1.1, 1.5)
# at eta = 0.3 the susceptibility never exceeds ~1/(2 eta), so the shared
# family must stay below that cap for the regularized curves to exist
_DELTA_LEVELS = (0.3, 1.0, 1.5)

RECIPES = {
    "fig1": FigureRecipe(
        "fig1",
        runs=(
            FigureRun("boundary.csv", "phase_boundary",
                      (("alpha_min", 0.6), ("alpha_max", 0.999), ("tol", 1e-6))),
        ),
        non_paper_choices=("alpha range [0.6, 0.999]",),
    ),
    "fig2": FigureRecipe(
        "fig2",
        runs=_iso_family(0.0, _Q0_LEVELS, 0.6, 0.99, "q0"),
        non_paper_choices=(
            f"sqrt(q0) level family {_Q0_LEVELS}",
            "alpha range [0.6, 0.99]",
        ),
    ),
    "fig3": FigureRecipe(
        "fig3",
        runs=_iso_family(0.01, _Q0_LEVELS, 0.6, 0.995, "q0"),
        non_paper_choices=(
            f"sqrt(q0) level family {_Q0_LEVELS}",
            "alpha range [0.6, 0.995]",
        ),
    ),
    "fig4": FigureRecipe(
        "fig4",
        runs=_iso_family(0.05, _Q0_LEVELS, 0.6, 0.995, "q0"),
        non_paper_choices=(
            f"sqrt(q0) level family {_Q0_LEVELS}",
            "alpha range [0.6, 0.995]",
        ),
    ),
    "fig5": FigureRecipe(
        "fig5",
        runs=_iso_family(0.0, _DELTA_LEVELS, 0.6, 0.99, "delta"),
        non_paper_choices=(
            f"susceptibility level family {_DELTA_LEVELS}",
            "alpha range [0.6, 0.99]",
        ),
    ),
    "fig6": FigureRecipe(
        "fig6",
        runs=tuple(
            FigureRun(
                name=f"delta1_eta{eta:g}.csv",
                kind="iso_delta",
                params=(("level", 1.0), ("eta", eta),
                        ("alpha_min", 0.6), ("alpha_max", 0.99)),
            )
            for eta in (0.01, 0.03, 0.1, 0.3)
        ),
        non_paper_choices=(
            "eta family {0.01, 0.03, 0.1, 0.3}",
            "alpha range [0.6, 0.99]",
        ),
    ),
    "fig7": FigureRecipe(
        "fig7",
        runs=_iso_family(0.3, _DELTA_LEVELS, 0.6, 0.99, "delta")
        + _iso_family(0.0, _DELTA_LEVELS, 0.6, 0.99, "delta0"),
        non_paper_choices=(
            f"susceptibility level family {_DELTA_LEVELS}",
            "alpha range [0.6, 0.99]",
        ),
    ),
    "fig8": FigureRecipe(
        "fig8",
        runs=tuple(
            FigureRun(
                name=f"r_of_eta_level{level:g}.csv",
                kind="r_of_eta",
                params=(("alpha", 0.975), ("level", level),
                        ("eta_min", 1e-4), ("eta_max", 3.0)),
            )
            for level in (1.01, 1.05, 1.1)
        ),
        non_paper_choices=("eta range [1e-4, 3.0]",),
    ),
}

_FIGURE_TOLERANCES = {
    "contour_level": 1e-6,
    "saddle_residual_norm": 1e-10,
    "boundary_bisection": 1e-6,
}


def _figure_run_worker(run):
    """Trace one figure curve; returns (name, csv text or None, status)."""
    try:
        curve = run.trace()
    except ReplicaESError as exc:
        return run.name, None, f"{type(exc).__name__}: {exc}"
    text = render_table(CURVE_COLUMNS, curve_records(curve), "csv",
                        status=curve.status)
    return run.name, text, curve.status


@main.command("figure")
@click.argument("figure_id", type=click.Choice(sorted(RECIPES)))
@click.option("--output-dir", type=click.Path(file_okay=False), default=None,
              help="Target directory [default: ./[FIGURE_ID]].")
@click.option("--workers", type=int, default=None,
              help="Process pool size for curves [default: CPU count].")
def cmd_figure(figure_id, output_dir, workers):
    """Write the data set behind one figure: CSVs plus a manifest."""
    recipe = RECIPES[figure_id]
    out = output_dir or figure_id
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(recipe.runs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_figure_run_worker, recipe.runs))
    else:
        results = [_figure_run_worker(run) for run in recipe.runs]

    os.makedirs(out, exist_ok=True)
    files = {}
    failures = {}
    for name, text, status in results:
        if text is None:
            failures[name] = status
            continue
        with open(os.path.join(out, name), "w", encoding="utf-8",
                  newline="") as fh:
            fh.write(text)
        files[name] = (text, status)
    manifest = build_manifest(
        name=figure_id,
        parameters={run.name: {"kind": run.kind, **dict(run.params)}
                    for run in recipe.runs},
        files=files,
        tolerances=_FIGURE_TOLERANCES,
        non_paper_choices=recipe.non_paper_choices,
        failures=failures,
    )
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(render_manifest(manifest))
    for name, reason in failures.items():
        click.echo(f"failed: {name}: {reason}", err=True)
    click.echo(f"wrote {len(files)} curve files and manifest.json to {out}/")
    if failures:
        sys.exit(14)


if __name__ == "__main__":
    main()
