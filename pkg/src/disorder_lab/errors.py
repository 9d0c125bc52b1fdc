"""Error types shared by the library and the CLI."""

from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by disorder-lab."""
    exit_code: int = 1


class DomainError(LabError, ValueError):
    """A parameter lies outside the domain an operation supports."""
    exit_code = 2


class ConfigError(LabError):
    """The experiment configuration is inconsistent or incomplete."""
    exit_code = 2


class ResourceError(LabError):
    """An operation would exceed its compute or memory budget."""
    exit_code = 3


class AcceptanceError(LabError):
    """A built-in acceptance check failed."""
    exit_code = 4
