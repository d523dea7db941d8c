"""Exception types shared across the package."""


class SetupError(ValueError):
    """Invalid mesh, boundary, material or configuration input."""


class AssemblyError(ValueError):
    """Inconsistent sizes or out-of-range fields handed to an assembly routine."""


class SolverError(RuntimeError):
    """Linear or nonlinear solver failure (singular tangent, broken line search)."""


class NonConvergedError(SolverError):
    """Newton ran out of iterations.

    Carries the best state reached so the caller can retry with ramping.
    """

    def __init__(self, message, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report
