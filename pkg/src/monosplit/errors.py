"""Exception hierarchy shared by every module."""


class MonosplitError(Exception):
    """Base class for all library errors."""


class ParameterError(MonosplitError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ShapeError(MonosplitError, ValueError):
    """Array dimensions do not match."""


class ConfigurationError(MonosplitError, ValueError):
    """Unknown names or structurally invalid combinations."""


class SamplingError(MonosplitError, RuntimeError):
    """Random sampling produced no usable data."""


class ConstructionError(MonosplitError, RuntimeError):
    """A problem instance could not be built or certified."""


class DiagnosticUnavailable(MonosplitError, RuntimeError):
    """A diagnostic needs data that the run or problem does not carry."""


class FitError(MonosplitError, ValueError):
    """A log-linear fit was requested on unusable data."""


class NonFiniteError(MonosplitError, FloatingPointError):
    """NaN or Inf crossed an oracle boundary."""
