"""Exception hierarchy for rwre_lab."""


class RwreLabError(Exception):
    """Base class for all library errors."""


class LawError(RwreLabError, ValueError):
    """A site law violates one of its invariants."""


class NormalizationError(LawError):
    pass


class EllipticityError(LawError):
    pass


class EmptySupportError(LawError):
    pass


class SeedCollisionError(RwreLabError, ValueError):
    pass


class ResourceError(RwreLabError, MemoryError):
    """A dynamic-programming table would exceed the configured size cap."""


class InvalidStepError(RwreLabError, ValueError):
    pass


class UnreachableError(RwreLabError, ValueError):
    pass


class InsufficientSamplesError(RwreLabError, ValueError):
    pass


class DegenerateDirectionError(RwreLabError, ValueError):
    pass


class UnknownObservableError(RwreLabError, KeyError):
    pass


class ConfigError(RwreLabError, ValueError):
    pass
