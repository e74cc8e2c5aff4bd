"""Replica-symmetric theory and Monte Carlo validation for l2-regularized
Expected Shortfall portfolio optimization.

The package solves the saddle-point equations of the replica free energy
for the regularized CVaR portfolio problem, traces phase boundaries and
contour curves in the (confidence, aspect-ratio, regularizer) space, and
cross-checks the theory against direct convex optimization on sampled
return matrices.
"""

from .backend import backend_name
from .geometry import (
    CurveResult,
    CurveSpec,
    branch_labels,
    trace_iso_delta,
    trace_iso_q0,
    trace_phase_boundary,
    trace_r_of_eta,
    transition_width,
)
from .mc import (
    Estimate,
    MCConfig,
    MCInstance,
    MCSummary,
    es_out_analytic,
    es_unit,
    estimate_summary,
    estimate_susceptibility,
    sample_instance,
    solve_program,
)
from .saddle import (
    Observables,
    OrderParams,
    ProblemParams,
    ReducedSolution,
    Residuals3,
    eliminate_conjugates,
    free_energy_value,
    full_residuals,
    gaussian_averages,
    observables,
    reduced_residuals,
    solve_reduced,
    wstar,
)
from .special import g, g_prime, phi, psi, w_fn

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    "g",
    "g_prime",
    "phi",
    "psi",
    "w_fn",
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
    "CurveSpec",
    "CurveResult",
    "branch_labels",
    "transition_width",
    "trace_phase_boundary",
    "trace_iso_q0",
    "trace_iso_delta",
    "trace_r_of_eta",
    "MCConfig",
    "MCInstance",
    "MCSummary",
    "Estimate",
    "sample_instance",
    "solve_program",
    "estimate_summary",
    "estimate_susceptibility",
    "es_unit",
    "es_out_analytic",
]
