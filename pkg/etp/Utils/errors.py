class EtpError(Exception):
    """Base class of every error raised by the pipeline."""


class InputError(EtpError):
    """User input (files, flags, config values) failed validation."""


class FormatError(InputError):
    """A binary file or JSON document is corrupt or malformed.

    ``reason`` is one of the fixed diagnostics ("bad magic", "unsupported
    version", "size mismatch", "value out of range", "crc mismatch",
    "unknown model kind", "duplicate parameter name", "schema").
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        message = reason if not detail else f"{reason}: {detail}"
        super().__init__(message)


class ShapeError(EtpError, ValueError):
    pass


class TrainingError(EtpError):
    pass


class ConvergenceError(EtpError):
    pass
