"""Exception types shared across the package."""

from __future__ import annotations


class LobsiftError(Exception):
    """Base class for package-specific failures."""


class ParseError(LobsiftError):
    """A tick-file row could not be parsed; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class StreamOrderError(LobsiftError):
    """Event timestamps went backwards."""


class StreamStructureError(LobsiftError):
    """An event referenced an order in a way the stream cannot support."""


class ConfigError(LobsiftError):
    """A run configuration is inconsistent or incomplete."""
