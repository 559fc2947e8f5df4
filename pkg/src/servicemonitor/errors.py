"""Exception hierarchy shared by all servicemonitor modules.

The CLI maps these onto exit codes: training infeasibility
(TrainingError and subclasses) exits 3, every other
ServiceMonitorError exits 2.
"""


class ServiceMonitorError(Exception):
    """Base class for all errors raised by this package."""


class CatalogError(ServiceMonitorError):
    """Invalid service catalog (too small, malformed, duplicated)."""


class CatalogParseError(CatalogError):
    """Malformed catalog line or field; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateFunctionError(CatalogError):
    """The same (interface_token, function_code) pair appears twice."""


class TraceFormatError(ServiceMonitorError):
    """Transaction log stream violates the SMTR or JSONL framing."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TraceTruncationError(TraceFormatError):
    """Stream ends in the middle of a record."""


class TokenBoundsError(TraceTruncationError):
    """Declared interface-token length runs past the end of the stream."""


class ResolutionError(ServiceMonitorError):
    """A record's (interface, code) pair is not in the catalog under error policy."""


class BoundsError(ServiceMonitorError):
    """An event id falls outside the model's state space."""


class DomainError(ServiceMonitorError):
    """Numeric input outside the mathematically valid domain (negative, non-finite)."""


class ShapeError(ServiceMonitorError):
    """Array or vector dimensions do not match the expected shape."""


class LabelError(ServiceMonitorError):
    """A label is missing or not one of the two known classes."""


class BindingError(ServiceMonitorError):
    """Data is bound to a different catalog digest than expected."""


class TrainingError(ServiceMonitorError):
    """Training is infeasible on the given data (e.g. a single class)."""


class InsufficientDataError(TrainingError):
    """Fewer samples than the fitting procedure requires."""


class StratificationError(TrainingError):
    """A class has fewer members than the requested fold count."""


class MetricError(ServiceMonitorError):
    """A metric is undefined for the given scores/labels (e.g. one class only)."""


class ModelFormatError(ServiceMonitorError):
    """Serialized model stream is corrupt, truncated, or fails its checksum."""


class VersionError(ModelFormatError):
    """Serialized model carries an unsupported format version."""


class ConsistencyError(ServiceMonitorError):
    """Model bundle fields violate their mutual-consistency invariants."""


class ProfileError(ServiceMonitorError):
    """Synthetic family profile violates its distribution invariants."""


class ConfigError(ServiceMonitorError):
    """Invalid run configuration or generator setup."""
