"""Exception types raised by the solvers."""


class ImpactGameError(Exception):
    """Base class for all solver errors."""


class AssumptionViolated(ImpactGameError):
    """A standing model assumption (e.g. beta_i >= 0) does not hold."""


class GridMismatch(ImpactGameError, ValueError):
    """Paths handed to a solver do not live on the expected time grid."""


class OffGridError(ImpactGameError, ValueError):
    """A time value was requested that is not a grid node."""


class IllConditioned(ImpactGameError):
    """Linear system is singular to working precision."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class BlowUp(ImpactGameError):
    """A Riccati solution left the configured bound."""

    def __init__(self, message: str, time: float, norm: float):
        super().__init__(f"{message} at t={time:.6g} (norm {norm:.3e})")
        self.time = time
        self.norm = norm


class BoundsViolation(ImpactGameError):
    """A solution broke one of its a-priori estimates."""


class NoConvergence(ImpactGameError):
    """An iterative scheme stopped at its iteration cap."""

    def __init__(self, message: str, residuals):
        last = residuals[-1] if len(residuals) else float("nan")
        super().__init__(f"{message} (last residual {last:.3e})")
        self.residuals = list(residuals)
        self.residual = last


class DegenerateRegression(ImpactGameError):
    """Regression design matrix is rank deficient."""
