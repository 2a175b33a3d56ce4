"""Exception types shared across the package."""


class ATHError(Exception):
    """Base class for every error raised by this package."""


class DegenerateDistribution(ATHError, ValueError):
    pass


class UnknownVocabularyTerm(ATHError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class ParseError(ATHError, ValueError):
    def __init__(self, line: str, reason: str = "malformed line"):
        super().__init__(f"{reason}: {line!r}")
        self.line = line


class UnknownOperation(ParseError):
    def __init__(self, line: str):
        super().__init__(line, "unknown operation")


class UntokenizableArgument(ATHError, ValueError):
    pass


class DetokenizeError(ATHError, ValueError):
    pass


class LossyRoundTrip(ATHError):
    """A tokenize/detokenize round trip did not reproduce its input."""


class UnsupportedStructure(ATHError):
    pass


class UnsupportedOperation(ATHError):
    pass


class NoViablePath(ATHError):
    """Every candidate path has probability zero at some step.

    ``partial`` holds the best path over the viable prefix (steps before
    ``step``), or None when the very first step already fails.
    """

    def __init__(self, step: int, partial=None):
        super().__init__(f"no viable path at step {step}")
        self.step = step
        self.partial = partial


class AnswerFailure(ATHError):
    """The executor could not produce an answer; scored as incorrect."""

    def __init__(self, reason: str, cause: Exception | None = None, paths=()):
        super().__init__(f"{reason}: {cause}" if cause else reason)
        self.reason = reason
        self.cause = cause
        self.paths = tuple(paths)


class EmptyPath(ATHError, ValueError):
    pass


class CalibrationError(ATHError, ValueError):
    pass


class OracleTooLarge(ATHError):
    pass


class IngestError(ATHError):
    def __init__(self, path, field: str, reason: str):
        super().__init__(f"{path}: {field}: {reason}")
        self.path = path
        self.field = field


class ConfigError(ATHError):
    pass
