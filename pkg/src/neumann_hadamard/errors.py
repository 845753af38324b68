"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid input: bad shapes, non-finite entries, violated preconditions."""


class SolverError(RuntimeError):
    """An iterative process failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(SolverError):
    """Eigen-iteration stopped with some Ritz pairs unconverged."""

    def __init__(self, message, unconverged=(), residual=None):
        super().__init__(message, residual=residual)
        self.unconverged = tuple(unconverged)


class DegenerateProjectionError(RuntimeError):
    """The projected Gram matrix of a cluster is numerically singular."""


class ClusterResolutionError(RuntimeError):
    """A perturbed cluster could not be isolated from its neighbours."""


class DegenerateDomainError(InputError):
    """A perturbation removes the whole domain (depth >= height)."""


class StudyInconclusiveError(RuntimeError):
    """Every sweep row was limited by discretization error."""
