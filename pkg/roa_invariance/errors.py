# roa_invariance/errors.py

class RoaError(Exception):
    """Base class for every failure raised by the library."""


class ConfigError(RoaError, ValueError):
    pass


class DimensionMismatch(RoaError, ValueError):
    pass


class IntegrationDiverged(RoaError):
    """Non-finite derivative or state beyond the divergence guard."""

    def __init__(self, message: str, time: float, state, trajectory=None):
        super().__init__(message)
        self.time = time
        self.state = state
        self.trajectory = trajectory


class IntegrationError(RoaError):
    pass


class NoEquilibriumFound(RoaError):
    def __init__(self, message: str, best, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


class PolytopeError(RoaError, ValueError):
    pass


class UnboundedSet(RoaError):
    pass


class EmptyIntersection(RoaError):
    pass


class EquilibriumOutside(RoaError):
    pass


class UnknownExample(RoaError, ValueError):
    pass


class CaseError(RoaError, ValueError):
    pass


class CaseSchemaError(CaseError):
    pass


class MissingSlackError(CaseError):
    pass


class DisconnectedNetworkError(CaseError):
    pass


class PowerFlowDiverged(RoaError):
    def __init__(self, message: str, mismatch: float, iterations: int):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


class ReductionFailed(RoaError):
    def __init__(self, message: str, node):
        super().__init__(message)
        self.node = node


class ContingencyError(RoaError, ValueError):
    pass


class NoPostFaultSep(RoaError):
    pass


class ContingencyUnstable(RoaError):
    pass


class ProjectionError(DimensionMismatch):
    pass
