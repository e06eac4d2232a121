"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class DomainError(EngineError):
    """A domain invariant or operation precondition was violated."""


class ParseError(EngineError):
    """Structured model output could not be parsed.

    Carries the violation code that the format reward will cite.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class JudgeError(EngineError):
    """Judge backend transport failure; retriable, distinct from parse failures."""

    def __init__(self, message: str, retriable: bool = True, timeout: bool = False):
        super().__init__(message)
        self.retriable = retriable
        self.timeout = timeout


class ConfigError(EngineError):
    """Invalid engine configuration."""
