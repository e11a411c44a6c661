"""Exception hierarchy shared by every module."""


class LodoharError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LodoharError):
    """A file could not be decoded."""

    def __init__(self, path, offset, reason):
        self.path = str(path)
        self.offset = offset
        self.reason = reason
        super().__init__(f"{self.path}: byte {offset}: {reason}")


class ValidationError(LodoharError):
    """An object violates one of its invariants."""

    def __init__(self, subject, rule, detail=""):
        self.subject = subject
        self.rule = rule
        msg = f"{subject}: violates '{rule}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConfigError(LodoharError):
    """Invalid configuration or argument combination."""


class UnsupportedOperation(LodoharError):
    """The request is outside what the operation supports (e.g. upsampling)."""


class UnmappedLabelError(LodoharError):
    """Raw labels without a rule in the label space."""

    def __init__(self, pairs):
        self.pairs = sorted(set(pairs))
        listing = ", ".join(f"({d!r}, {l!r})" for d, l in self.pairs)
        super().__init__(f"no label rule for: {listing}")


class ShapeError(LodoharError):
    """Layer shapes do not chain."""


class TrainingError(LodoharError):
    """Training diverged or received non-finite values."""


class CheckpointError(LodoharError):
    """Checkpoint file is corrupt or has the wrong format."""
