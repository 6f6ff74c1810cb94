"""Exception hierarchy.

Every domain failure raised by the package derives from
:class:`EvidenceFlowError`, so callers (and the CLI) can catch one type.
"""


class EvidenceFlowError(Exception):
    """Base class for all domain errors."""


# numerics
class NonFiniteEntries(EvidenceFlowError, ValueError):
    pass


class SingularMatrix(EvidenceFlowError):
    pass


class NotSymmetric(EvidenceFlowError, ValueError):
    pass


class NotLaplacian(EvidenceFlowError, ValueError):
    pass


class Disconnected(EvidenceFlowError):
    pass


class DimensionMismatch(EvidenceFlowError, ValueError):
    pass


# model
class MalformedRow(EvidenceFlowError, ValueError):
    pass


class IncompleteMultiArm(EvidenceFlowError, ValueError):
    pass


class DuplicateContrast(EvidenceFlowError, ValueError):
    pass


class NegativeTau2(EvidenceFlowError, ValueError):
    pass


class NonPositiveVariance(EvidenceFlowError, ValueError):
    pass


class NegativeAdjustedWeight(EvidenceFlowError):
    pass


class DisconnectedNetwork(Disconnected):
    def __init__(self, components):
        self.components = [list(c) for c in components]
        desc = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in self.components)
        super().__init__(f"network splits into {len(self.components)} components: {desc}")


# flow / random walk / streams
class RowNotFound(EvidenceFlowError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownNode(EvidenceFlowError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class WalkLengthExceeded(EvidenceFlowError):
    pass


class ConservationViolation(EvidenceFlowError):
    pass


class CycleDetected(EvidenceFlowError):
    pass


class PathExplosion(EvidenceFlowError):
    pass


class Stalled(EvidenceFlowError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = dict(residual or {})
