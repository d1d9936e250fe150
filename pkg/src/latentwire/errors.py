"""Exception types shared across the pipeline."""


class LatentWireError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(LatentWireError):
    """A dataset schema is internally inconsistent."""


class ParseError(LatentWireError):
    """A CSV row could not be parsed against its schema."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class LabelError(LatentWireError):
    """A label string is neither a known attack nor a known normal value."""

    def __init__(self, value, row=None):
        super().__init__(f"unknown label value {value!r}" + (f" at row {row}" if row is not None else ""))
        self.value = value
        self.row = row


class ShapeError(LatentWireError):
    """Tensor or vector dimensions do not line up."""


class DivergedError(LatentWireError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, epoch=None, batch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.history = history


class MapLoadError(LatentWireError):
    """A compression-map file failed validation on load.

    ``kind`` is one of ``"version"``, ``"shape"``, ``"corrupt"``.
    """

    def __init__(self, message, kind):
        super().__init__(message)
        self.kind = kind


class ConfigError(LatentWireError):
    """An experiment or tool configuration is invalid; names the field."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ProtocolError(LatentWireError):
    """A wire frame was malformed or arrived out of protocol order."""


class StreamRejected(LatentWireError):
    """The server rejected this stream with a REJECT frame."""

    def __init__(self, reason_code):
        names = {1: "fingerprint mismatch", 2: "version", 3: "malformed"}
        super().__init__(f"stream rejected: {names.get(reason_code, 'unknown')} (code {reason_code})")
        self.reason_code = reason_code


class TransferError(LatentWireError):
    """The probe exhausted its retry budget while sending a frame."""


class SearchError(LatentWireError):
    """Hyperparameter search could not produce a result."""

    def __init__(self, message, trials=None):
        super().__init__(message)
        self.trials = trials or []
