"""
Exception hierarchy for darktraj.

Every error also derives from the closest builtin, so callers that only know
about ValueError / ArithmeticError / RuntimeError keep working.
"""


class DarkTrajError(Exception):
    """Base class for all darktraj errors."""


class DimensionError(DarkTrajError, ValueError):
    """Shapes or dimensions of the operands do not match."""


class DomainError(DarkTrajError, ValueError):
    """Argument outside the domain of the operation (zero vector, p out of range...)."""


class PreconditionError(DarkTrajError, ValueError):
    """An operation was called on an input that violates its precondition."""


class SizeError(DarkTrajError, ValueError):
    """Problem too large for the exact algorithm requested."""


class ConfigError(DarkTrajError, ValueError):
    """Invalid experiment configuration."""


class NumericError(DarkTrajError, ArithmeticError):
    """Numerical failure: underflow, degenerate weights, solver failure."""


class RankError(NumericError):
    """Matrix rank below what the operation needs."""


class StochasticityError(DarkTrajError, ValueError):
    """Kraus ensemble violates sum_i p_i v_i* v_i = Id."""

    def __init__(self, residual: float, tol: float):
        self.residual = float(residual)
        self.tol = float(tol)
        super().__init__(
            f"Stochasticity violated: ||sum p_i v_i* v_i - Id|| = {self.residual:.3e} > {self.tol:.1e}"
        )


class DarknessViolationError(NumericError):
    """An induced map that should be unitary is not (the subspace is not dark)."""

    def __init__(self, residual: float):
        self.residual = float(residual)
        super().__init__(f"Induced map is not unitary: residual {self.residual:.3e}")


class DiscoveryError(DarkTrajError, RuntimeError):
    """No certified dark subspace was found."""


class ReachabilityError(DarkTrajError, RuntimeError):
    """A dark subspace could not be reached from the center within the word budget."""


class MissingEntryError(DarkTrajError, KeyError):
    """Isometry family has no entry for the requested subspace."""

    def __str__(self):
        return str(self.args[0]) if self.args else "missing family entry"


class StageError(DarkTrajError, RuntimeError):
    """A pipeline stage failed; wraps the original exception."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
