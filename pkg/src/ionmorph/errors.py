"""Exception hierarchy shared across the toolkit."""


class IonmorphError(Exception):
    """Base class for all toolkit errors."""


# --- dataset I/O ---

class MalformedXml(IonmorphError):
    pass


class MissingBinary(IonmorphError):
    pass


class UuidMismatch(IonmorphError):
    pass


class UnsupportedEncoding(IonmorphError):
    pass


class IndexOutOfRange(IonmorphError, IndexError):
    pass


class TruncatedBinary(IonmorphError):
    pass


class InconsistentAxis(IonmorphError):
    pass


class UnparsableMask(IonmorphError):
    pass


class DimensionMismatch(IonmorphError):
    pass


class ManifestError(IonmorphError):
    pass


# --- scoring ---

class NonFiniteLogit(IonmorphError):
    pass


class ShapeMismatch(IonmorphError):
    pass


class ConstantInput(IonmorphError):
    pass


class ConstantImage(ConstantInput):
    pass


class DegenerateStack(IonmorphError):
    pass


class ScorerError(IonmorphError):
    """Raised when an external scorer misbehaves; carries the offending m/z when known."""

    def __init__(self, message, mz=None):
        super().__init__(message)
        self.mz = mz


class ScorerCrashed(ScorerError):
    pass


class ProtocolViolation(ScorerError):
    pass


class ScorerTimeout(ScorerError):
    pass


# --- candidate enumeration / picking ---

class EmptyCandidates(IonmorphError):
    pass


class StrategyModeMismatch(IonmorphError):
    pass


# --- evaluation ---

class AllThresholdsEmpty(IonmorphError):
    pass


# --- patches ---

class EvenPatchSize(IonmorphError):
    pass


class HeaderMismatch(IonmorphError):
    pass


# --- annotation service ---

class ManifestLocked(IonmorphError):
    pass
