"""Error types shared across the pipeline.

Every error carries a stable ``code`` (its class name) so the CLI and the
HTTP service can report machine-readable failures without string matching.
"""


class CatchReleaseError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# -- registry ---------------------------------------------------------------

class ParseError(CatchReleaseError):
    pass


class InvariantError(CatchReleaseError):
    pass


# -- media ingest -----------------------------------------------------------

class UndecodableMedia(CatchReleaseError):
    pass


class ZeroDuration(CatchReleaseError):
    pass


class StorageFull(CatchReleaseError):
    pass


class EmptySegment(CatchReleaseError):
    pass


class SegmentOutOfRange(CatchReleaseError):
    pass


class DecodeFailure(CatchReleaseError):
    def __init__(self, timestamp_s: float, message: str = ""):
        super().__init__(message or f"decode failed at t={timestamp_s:.3f}s")
        self.timestamp_s = timestamp_s


class NoAudioStream(CatchReleaseError):
    pass


# -- transcription / alignment ----------------------------------------------

class TranscriberUnavailable(CatchReleaseError):
    """Transient transcription-service failure; safe to retry."""


class TranscriberRejectedAudio(CatchReleaseError):
    pass


class DurationMismatch(CatchReleaseError):
    pass


class CrossVideoInput(CatchReleaseError):
    pass


# -- quality control ---------------------------------------------------------

class UndecodableImage(CatchReleaseError):
    pass


# -- dataset store ------------------------------------------------------------

class UnknownVersion(CatchReleaseError):
    pass


class StaleEventId(CatchReleaseError):
    """A concurrent writer appended first; re-read and retry."""


class ValidationError(CatchReleaseError):
    pass


class UnknownBatch(CatchReleaseError):
    pass


class UnknownTaxon(CatchReleaseError):
    pass


class BadRatios(CatchReleaseError):
    pass


# -- workflow -----------------------------------------------------------------

class IllegalTransition(CatchReleaseError):
    def __init__(self, from_state: int, to_state: int):
        super().__init__(f"illegal transition {from_state} -> {to_state}")
        self.from_state = from_state
        self.to_state = to_state


class GuardFailed(CatchReleaseError):
    pass


class UnknownTask(CatchReleaseError):
    pass


class WrongState(CatchReleaseError):
    pass


class BadAmount(CatchReleaseError):
    pass


class AlreadyResolved(CatchReleaseError):
    pass


class UnknownItem(CatchReleaseError):
    pass


# -- config -------------------------------------------------------------------

class ConfigError(CatchReleaseError):
    pass
