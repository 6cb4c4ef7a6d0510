"""Exception hierarchy shared across the package.

Every recoverable failure raises a :class:`TruckFlowError` subclass so the
CLI can map domain problems to a single exit code.
"""


class TruckFlowError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(TruckFlowError):
    """A file does not have the expected header or overall shape."""


class RowError(TruckFlowError):
    """A row of an input table could not be parsed or validated."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class DuplicatePairError(TruckFlowError):
    """The same (origin, destination) pair occurred more than once."""


class UnknownZoneError(TruckFlowError):
    """A record references a zone identifier absent from the zone table."""


class DataDomainError(TruckFlowError):
    """A numeric value is outside the domain an operation requires."""


class ModelFormatError(TruckFlowError):
    """A model file is malformed or structurally invalid."""


class ModelIntegrityError(TruckFlowError):
    """A model violates an internal invariant (e.g. non-positive cover)."""


class EnumerationGuardError(TruckFlowError):
    """A subset-enumeration size guard was exceeded."""


class CalibrationError(TruckFlowError):
    """Synthetic flow calibration could not reach its target."""
