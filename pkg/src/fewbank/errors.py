"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every failure raised by this package."""


class DataError(EngineError):
    """Invalid or inconsistent input data. CLI maps these to exit code 2."""


class BankFormatError(DataError):
    """File is not a valid bank: bad magic, version, or flag byte."""


class TruncatedBankError(DataError):
    """File ended before the payload declared in its header."""


class BankShapeError(DataError):
    """Row/dimension counts are out of range or inconsistent between inputs."""


class NonFiniteDataError(DataError):
    """Payload contains NaN or infinity."""


class ZeroVectorError(DataError):
    """A zero-norm row cannot be L2-normalized."""


class LabelRangeError(DataError):
    """A class label is outside [0, n_classes)."""


class InsufficientShotsError(DataError):
    """A class has fewer rows than the requested per-class shot count."""


class InsufficientCandidatesError(DataError):
    """A class has fewer candidates than the requested top-k count."""


class ManifestError(DataError):
    """Manifest file is missing fields or internally inconsistent."""


class DegenerateLogitsError(EngineError):
    """A logit vector is constant across classes and cannot be z-scored."""
