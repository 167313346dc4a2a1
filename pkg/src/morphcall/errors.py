"""Exception hierarchy shared across the pipeline."""


class MorphCallError(Exception):
    """Base class for all pipeline errors."""


class ConlluParseError(MorphCallError):
    """Malformed CoNLL-U input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(MorphCallError):
    """Invalid configuration: unknown language, unsupported task kind, bad paths."""


class GenerationError(MorphCallError):
    """Task generation could not produce a usable dataset."""


class FormatError(MorphCallError):
    """A file does not conform to its declared binary or text format."""


class IntegrityError(MorphCallError):
    """Checksum or pairing validation failed on otherwise well-formed data."""


class BindingError(MorphCallError):
    """A representation set does not belong to the dataset it was checked against."""
