"""Exception types raised across chordlab."""


class ChordLabError(Exception):
    """Base class for all chordlab errors."""


class HarteSyntaxError(ChordLabError, ValueError):
    """Invalid Harte chord label. ``offset`` is the byte offset of the fault."""

    def __init__(self, text, offset, reason):
        self.text = text
        self.offset = offset
        self.reason = reason
        super().__init__(f"{reason} at offset {offset} in {text!r}")


class FormatError(ChordLabError, ValueError):
    """Malformed corpus file."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class UnknownFeature(ChordLabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown feature"


class InvalidK(ChordLabError, ValueError):
    pass


class EmptyCorpus(ChordLabError, ValueError):
    pass


class ShapeMismatch(ChordLabError, ValueError):
    pass


class IndexOutOfRange(ChordLabError, IndexError):
    pass


class DoubleBackward(ChordLabError, RuntimeError):
    pass


class VersionMismatch(ChordLabError, ValueError):
    pass


class CorruptCheckpoint(ChordLabError, ValueError):
    pass


class DivergedLoss(ChordLabError, FloatingPointError):
    pass


class StoreCorrupt(ChordLabError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class LengthMismatch(ChordLabError, ValueError):
    pass


class EmptyInput(ChordLabError, ValueError):
    pass


class NoCorrectPredictions(ChordLabError, ValueError):
    pass


class NotMultiFeature(ChordLabError, ValueError):
    pass
