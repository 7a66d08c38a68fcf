"""
Exception hierarchy shared by every module.

The CLI maps these onto exit statuses (see main.py), so library code raises
the most specific class it can.
"""

from __future__ import annotations

__docformat__ = 'reStructuredText'


class KbqaError(Exception):
    """ Base class for every error raised by the toolkit. """


class ShapeError(KbqaError, ValueError):
    """ Tensor dimensions do not agree. """


class DomainError(KbqaError, ValueError):
    """ Input outside the domain of an operation (empty sequence, zero vector...). """


class UsageError(KbqaError):
    """ An API was called in the wrong state (second backward, missing grad...). """


class ConfigError(KbqaError, ValueError):
    """ Invalid or inconsistent configuration value. """


class ParseError(KbqaError):
    """ Malformed input file. Line numbers are 1-based. """

    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no
        self.message = message


class EntityLookupError(KbqaError, KeyError):
    """ Unknown entity or relation id. """

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ChainOverflowError(KbqaError):
    """ Core-chain expansion exceeded the per-entity cap. """


class ReformatError(KbqaError):
    """ An entity mention could not be located in the question text. """


class UnanswerableError(KbqaError):
    """ A pipeline stage could not produce a result for the question. """

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


DATA_ERRORS = (ParseError, EntityLookupError, DomainError, ReformatError, ChainOverflowError)
