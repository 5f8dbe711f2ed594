"""Exception hierarchy shared by the solver, simulator and CLI."""

from __future__ import annotations


class IQDPError(Exception):
    """Base class for all package errors."""


class InvalidQuantizerError(IQDPError, ValueError):
    """A quantizer does not fit the support it is applied to."""


class DomainError(IQDPError, ValueError):
    """An argument lies outside the domain of an operation."""


class CapacityError(IQDPError):
    """An enumeration would exceed its configured size cap."""


class ConfigurationError(IQDPError, ValueError):
    """A solve was requested that cannot be carried out (e.g. empty action set)."""


class PolicyIncompleteError(IQDPError, KeyError):
    """A policy has no quantizer for a reachable non-terminal state."""

    def __init__(self, key: tuple[int, int, int]) -> None:
        super().__init__(key)
        self.key = key

    def __str__(self) -> str:
        n, lo, hi = self.key
        return f"policy has no quantizer for state N={n}, lo={lo}, hi={hi}"


class SelfCheckError(IQDPError):
    """Two independent evaluation routes disagree."""
