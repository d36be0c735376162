"""Exception hierarchy shared by all entroflow modules."""


class EntroflowError(Exception):
    """Base class; the CLI prints the message verbatim and exits with code 1."""


class InvalidDiscretizationError(EntroflowError):
    pass


class InvalidDimensionError(EntroflowError):
    pass


class AssemblyError(EntroflowError):
    pass


class UnsupportedTopologyError(EntroflowError):
    pass


class SpectralError(EntroflowError):
    pass


class FlowError(EntroflowError):
    pass


class KernelTruncationError(EntroflowError):
    def __init__(self, message, required_k=None):
        super().__init__(message)
        self.required_k = required_k


class DegenerateDensityError(EntroflowError):
    pass


class NormalizationError(EntroflowError):
    pass


class NonpositiveOmegaError(EntroflowError):
    pass


class RemainderConstraintError(EntroflowError):
    pass


class ConfigError(EntroflowError):
    pass
