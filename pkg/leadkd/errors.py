# Copyright 2026 The leadkd developers

"""Exceptions and warnings raised across leadkd."""


class LeadError(Exception):
    """Base class of every error raised deliberately by leadkd."""


class InvalidInputError(LeadError, ValueError):
    """An argument has the wrong shape, length or content."""


class InvalidParameterError(LeadError, ValueError):
    """A numeric or configuration parameter is outside its valid range."""


class DomainError(LeadError, ArithmeticError):
    """A value falls outside the mathematical domain of an operation (e.g. log of zero)."""


class DivergenceError(LeadError, FloatingPointError):
    """Training produced a non-finite loss."""


class ConfigurationError(InvalidParameterError):
    """A configuration key, value or checkpoint is inconsistent with the experiment."""


class FormatError(InvalidInputError):
    """
    A line of a text file could not be parsed.

    Attributes
    ----------
    path : str
        File being read.
    lineno : int
        1-based number of the offending line.
    """

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__('%s:%i: %s' % (self.path, lineno, message))


class UnknownIdError(InvalidInputError, KeyError):
    """An identifier does not exist in the corpus or index."""

    def __init__(self, identifier, where='corpus'):
        self.identifier = identifier
        super().__init__('unknown id %r in %s' % (identifier, where))

    def __str__(self):
        return self.args[0]


class LeadWarning(UserWarning):
    """Recoverable data conditions (short mined lists, negatives drawn with replacement)."""
