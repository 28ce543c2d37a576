"""Exception hierarchy for bakrylab."""

from __future__ import annotations

from typing import Any, Dict, Optional


class BakryLabError(Exception):
    """Base class for every error raised by bakrylab."""


class DomainError(BakryLabError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ClockError(DomainError):
    """The time lies on the initial slice t = t0 - T, which the estimates exclude."""


class InvalidSpaceError(BakryLabError):
    """The model space violates its structural invariants."""


class WarpTableError(InvalidSpaceError):
    """A custom warp table could not be parsed or fails the pole conditions."""


class ShapeError(BakryLabError, ValueError):
    """A field does not match the grid it is used with."""


class PositivityLossError(BakryLabError):
    """A time step produced a nonpositive value."""

    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class NumericalError(BakryLabError):
    """A linear solve or integration failed."""


class HypothesisViolation(BakryLabError):
    """A theorem hypothesis (u <= D, K = 0, q = 0, ...) does not hold."""

    def __init__(self, message: str, point: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.point = point or {}


class StatsInconsistencyError(BakryLabError):
    """Cylinder statistics disagree with the field they are applied to."""


class ConfigError(BakryLabError):
    """An experiment configuration is invalid."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CheckError(BakryLabError):
    """A module error surfaced while running a named check."""

    def __init__(self, check: str, field: str, cause: Exception):
        super().__init__(f"[{check}] ({field}) {cause}")
        self.check = check
        self.field = field
        self.cause = cause
