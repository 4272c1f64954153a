"""Exception types raised across the package."""


class ChordFlowError(Exception):
    """Base class for all package errors."""


class RankDeficient(ChordFlowError):
    """Chart Jacobian has numerical rank below the intrinsic dimension."""


class NotTangent(ChordFlowError):
    pass


class NotPlanarBoundary(ChordFlowError):
    pass


class DegenerateChord(ChordFlowError):
    """Chord endpoints coincide (or the supplied length is not positive)."""


class StepRejected(ChordFlowError):
    pass


class TooFewSamples(ChordFlowError):
    pass


class PreconditionNotMet(ChordFlowError):
    pass


class EmptyPlan(ChordFlowError):
    pass


class ConfigError(ChordFlowError):
    pass


class ExprError(ChordFlowError):
    """Base for expression errors; ``offset`` is a byte offset into the source."""

    label = "ExprError"

    def __init__(self, message: str, offset: int | None = None):
        self.message = message
        self.offset = offset
        if offset is None:
            super().__init__(message)
        else:
            super().__init__(f"{self.label} at offset {offset}: {message}")


class ExprSyntaxError(ExprError):
    label = "SyntaxError"


class UnknownIdentifier(ExprError):
    label = "UnknownIdentifier"


class ArityError(ExprError):
    label = "ArityError"


class DomainError(ExprError):
    label = "DomainError"
