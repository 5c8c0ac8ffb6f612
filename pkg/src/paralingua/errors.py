"""Exception hierarchy shared by all pipeline stages."""


class ParalinguaError(Exception):
    """Base class for every error raised by this package."""


class FormatError(ParalinguaError, ValueError):
    """An input file does not follow its documented format."""


class IntegrityError(ParalinguaError, ValueError):
    """Parsed data violates a structural invariant (duplicates, overlaps)."""


class ParameterError(ParalinguaError, ValueError):
    """A caller-supplied parameter is out of its valid range."""


class DataError(ParalinguaError, ValueError):
    """Numeric data is unusable (non-finite values, unknown labels)."""


class AlignmentError(ParalinguaError, ValueError):
    """Two collections that must line up by utterance or class do not."""


class NumericError(ParalinguaError, ArithmeticError):
    """A numerical procedure produced a non-finite result."""
