"""Exception hierarchy shared by all poleinspect modules."""


class PoleInspectError(Exception):
    """Base class for every error raised by this package."""


class FrameMismatch(PoleInspectError):
    pass


class InvalidBox(PoleInspectError, ValueError):
    pass


class InvalidParams(PoleInspectError, ValueError):
    pass


class CorpusWriteError(PoleInspectError, OSError):
    pass


class InsufficientPositives(PoleInspectError):
    pass


class EmptyTargetClass(PoleInspectError):
    pass


class InvalidImage(PoleInspectError, ValueError):
    pass


class CropTooSmall(PoleInspectError, ValueError):
    pass


class InvalidCounts(PoleInspectError, ValueError):
    pass


class ShapeMismatch(PoleInspectError, ValueError):
    pass


class SingleClassInput(PoleInspectError, ValueError):
    pass


class PoolExhausted(PoleInspectError):
    pass


class UndefinedMetric(PoleInspectError, ValueError):
    pass


class FormatVersionError(PoleInspectError):
    pass


class ChecksumError(PoleInspectError):
    pass


class StageError(PoleInspectError):
    """A pipeline stage failed; ``stage`` names it and ``exit_code`` is CLI-facing."""

    def __init__(self, stage: str, exit_code: int, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.exit_code = exit_code
        self.cause = cause
