"""Exception types raised across the pipeline."""


class ShadowPipeError(Exception):
    """Base class for all pipeline errors."""


class ParseError(ShadowPipeError):
    """Config or artifact file is not well-formed."""


class ValidationError(ShadowPipeError):
    """Well-formed input violates a contract (unknown stage, bad range, ...)."""


class LedgerConflict(ShadowPipeError):
    """Resume attempted against a mismatched or missing run ledger."""


class StageError(ShadowPipeError):
    """A pipeline stage failed; carries the stage instance name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class NotFound(ShadowPipeError):
    pass


class DecodeError(ShadowPipeError):
    """Image file could not be decoded."""


class EmptyDirectory(ShadowPipeError):
    pass


class MissingProfile(ShadowPipeError):
    """No camera profile for this serial while strict mode is on."""


class AdapterCrash(ShadowPipeError):
    """Detector adapter process exited nonzero."""


class ProtocolError(ShadowPipeError):
    """Malformed record on the adapter wire; carries the line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class OrphanCrop(ShadowPipeError):
    """Detection references a crop the run does not know about."""


class MissingCrop(ShadowPipeError):
    """Vote task references a crop file that is not on disk."""


class UnknownTask(ShadowPipeError):
    pass


class InvalidChoice(ShadowPipeError):
    pass


class SchemaError(ShadowPipeError):
    """Vote export document does not match the export schema."""


class WeightError(ShadowPipeError):
    """Fusion weights do not form a valid probability function."""


class RangeError(ShadowPipeError):
    """A detection probability lies outside the closed unit interval."""


class UnknownClass(ShadowPipeError):
    """Label class missing from the export class index."""
