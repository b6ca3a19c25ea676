"""Exception taxonomy shared across the package."""


class VarsigError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(VarsigError, ValueError):
    """Array shape does not match the contract of the operation."""


class DomainError(VarsigError, ValueError):
    """Input value outside the mathematical domain of the operation."""


class ConfigError(VarsigError, ValueError):
    """Inconsistent or incompatible configuration."""


class TensorFormatError(VarsigError, ValueError):
    """Malformed tensor file. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedModelError(VarsigError, ValueError):
    """Forward model is outside what the solver or method supports."""


class AlignmentUndefinedError(VarsigError, ValueError):
    """Phase alignment is undefined, e.g. no spectral amplitude in the window."""


class ModelStateError(VarsigError, RuntimeError):
    """Network state unusable: untrained, NaN parameters, or wrong system."""


class TrainingDivergedError(VarsigError, RuntimeError):
    """Loss became non-finite during training. Carries diagnostics."""

    def __init__(self, message: str, epoch: int, batch: int, components: dict):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.components = components
