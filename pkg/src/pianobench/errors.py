"""
Exception and warning types raised by pianobench.

Every error carries the exit code the command line maps it to:
2 for input pairing problems, 3 for schema problems, 4 for numeric failures.
"""


class PianoBenchError(Exception):
    exit_code: int = 1


# input pairing (exit 2)


class PairingError(PianoBenchError):
    exit_code = 2


class UnpairedClip(PairingError):
    def __init__(self, clip_id: str, missing_in: str) -> None:
        super().__init__(f"clip '{clip_id}' has no counterpart in {missing_in}")
        self.clip_id = clip_id
        self.missing_in = missing_in


class EmptyDataset(PairingError):
    pass


# schema (exit 3)


class SchemaViolation(PianoBenchError, ValueError):
    exit_code = 3


class BadFrameCount(SchemaViolation):
    pass


class ConflictingSplit(SchemaViolation):
    pass


class MidiError(SchemaViolation):
    pass


class MalformedHeader(MidiError):
    pass


class TruncatedChunk(MidiError):
    pass


class InvalidVlq(MidiError):
    pass


class MalformedTrack(MidiError):
    pass


# numeric (exit 4)


class NumericError(PianoBenchError, ValueError):
    exit_code = 4


class DimensionMismatch(NumericError):
    pass


class NotPSD(NumericError):
    pass


class TooFewSamples(NumericError):
    pass


class TooShort(NumericError):
    pass


class LengthMismatch(NumericError):
    pass


class NonFinite(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class StepOutOfRange(NumericError):
    pass


class BadRange(NumericError):
    pass


class BadWindow(NumericError):
    pass


# warnings


class UnmatchedNoteOff(UserWarning):
    """A note-off (or zero-velocity note-on) without a sounding note; dropped."""


class DanglingNoteOn(UserWarning):
    """A note still sounding at the end of its track; closed there."""


class LatentDimClamped(UserWarning):
    """Too few evaluation samples for the requested embedder dimension."""
