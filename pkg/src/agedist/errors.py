"""Exception types shared across the toolkit."""

from __future__ import annotations


class AgedistError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AgedistError):
    """Run configuration is malformed or fails schema validation."""


class ConvergenceError(AgedistError):
    """An iterative solver hit its iteration cap without converging."""


class CausalityError(AgedistError):
    """A replayed plan tried to spend energy before it was harvested."""

    def __init__(self, block: int, message: str | None = None):
        self.block = block
        super().__init__(message or f"energy causality violated at block {block}")


class InfeasibleScheduleError(AgedistError):
    """A schedule cannot be powered by the given energy arrivals."""
