"""Exception taxonomy for the package.

Every error raised by the library derives from :class:`ReplicaESError` so
callers can catch the whole family with one clause.  The CLI maps each class
to a fixed process exit code (see :mod:`replica_es.cli`).
"""


class ReplicaESError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ReplicaESError, ValueError):
    """A parameter lies outside its admissible range."""


class NonConvexPotential(ReplicaESError):
    """The effective single-variable potential lost convexity.

    Raised when the curvature coefficient that must stay positive for the
    scalar minimization to be well posed is not positive.
    """


class InfeasibleLift(ReplicaESError):
    """A reduced solution cannot be lifted to the full six-variable set.

    Happens when q0 < 1, which would require a positive value for a
    conjugate parameter that must be <= 0.
    """


class QuadratureFailure(ReplicaESError):
    """A Gaussian-average integral did not reach the requested accuracy."""


class NoConvergence(ReplicaESError):
    """The damped Newton iteration failed to reach the residual tolerance.

    Carries the last iterate and residual norm when available.
    """

    def __init__(self, message, last=None, residual_norm=None):
        super().__init__(message)
        self.last = last
        self.residual_norm = residual_norm


class InfeasibleRegion(ReplicaESError):
    """No finite saddle point exists at the requested parameters.

    At eta = 0 the solver diverges (q0, delta -> infinity) beyond the
    feasibility boundary; this error reports that divergence.
    """


class LevelUnreachable(ReplicaESError):
    """A contour level is not attained anywhere in the requested range."""


class NoTurningPoint(ReplicaESError):
    """A traced curve has no fold, so fold-relative quantities are undefined."""


class TruncatedNearOne(ReplicaESError):
    """The confidence level came closer to 1 than the resolvable limit.

    Tracers flag and truncate rather than extrapolate; this class is raised
    only when the entire requested range is beyond the limit, and otherwise
    appears as the recorded truncation reason on the curve status.
    """


class Unbounded(ReplicaESError):
    """The sampled optimization program is unbounded below."""


class AllUnbounded(ReplicaESError):
    """Every replication of a Monte Carlo run was unbounded."""


class ShiftTooLarge(ReplicaESError):
    """The susceptibility probe shift changed the solution structurally.

    Raised when the perturbed programs select materially different active
    sets in more than half of the replications, which invalidates the
    central-difference response estimate.
    """
