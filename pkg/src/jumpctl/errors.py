"""Exception types raised by the synthesis and analysis routines."""


class JumpCtlError(Exception):
    """Base class for all package errors."""


class ValidationError(JumpCtlError, ValueError):
    """Inputs fail a structural or probabilistic check."""


class DimensionMismatch(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class InvalidInitialMode(ValidationError):
    pass


class NotErgodic(ValidationError):
    pass


class InsufficientTrials(ValidationError):
    pass


class SolverError(JumpCtlError):
    """A numerical procedure could not deliver a certified answer."""


class ConvergenceFailure(SolverError):
    pass


class NotConverged(SolverError):
    def __init__(self, max_iter, residual):
        self.max_iter = max_iter
        self.residual = residual
        super().__init__(
            f"no convergence after {max_iter} iterations (residual {residual:.3e})")


class SingularBtilde(SolverError):
    def __init__(self, mode, detail="control never delivered"):
        self.mode = mode
        super().__init__(f"SingularBtilde: {detail} from mode {mode}")


class SingularRtilde(SolverError):
    def __init__(self, mode):
        self.mode = mode
        super().__init__(f"SingularRtilde: innovation covariance singular in mode {mode}")


class NonStabilizing(SolverError):
    def __init__(self, rho):
        self.rho = rho
        super().__init__(f"NonStabilizing: converged but spectral radius {rho:.6g} >= 1")


class NoInitialGain(SolverError):
    pass


class HypothesisNotSatisfied(JumpCtlError, ValueError):
    pass
