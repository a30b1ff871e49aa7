"""Exception hierarchy shared across the package."""


class HQNoiseError(Exception):
    """Base class for all package errors."""


class DimensionError(HQNoiseError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(HQNoiseError, ValueError):
    """Invalid configuration value."""


class DegenerateInputError(HQNoiseError, ValueError):
    """Input has zero spread where a standard deviation is divided by."""


class ScheduleMisuseError(HQNoiseError, ZeroDivisionError):
    """A noise prediction was requested at sigma == 0."""


class ProtocolError(HQNoiseError, RuntimeError):
    """Pipeline stages were called out of order or with missing state."""


class TrainingError(HQNoiseError, RuntimeError):
    """Training produced a non-finite gradient or loss."""


class VerificationError(HQNoiseError, AssertionError):
    """A numerical identity check exceeded its tolerance."""


class FormatError(HQNoiseError, ValueError):
    """A binary file does not match the expected layout."""
