"""Exception types raised across the package."""


class CQNLSError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CQNLSError, ValueError):
    """Invalid parameters or preconditions violated before any compute."""


class GridMismatch(CQNLSError, ValueError):
    """Two fields live on different grids (or a field does not match its grid)."""


class NumericError(CQNLSError, RuntimeError):
    """An iterative method failed to converge or produced non-finite values."""


class NoGroundState(CQNLSError):
    """Shooting could not bracket a positive decaying solution."""


class SpectralFailure(CQNLSError):
    """No unstable internal mode was found for the linearized operator."""


class GaugeDegenerate(CQNLSError):
    """The field is (nearly) orthogonal to the frequency tangent; no phase can be fixed."""


class StepReject(CQNLSError):
    """The implicit time step did not converge; the caller should shrink dt."""


class ResonanceError(CQNLSError):
    """A linear solve in the series construction is close to singular."""


class ProjectionError(CQNLSError):
    """Threshold projection failed (singular Jacobian or no convergence)."""
