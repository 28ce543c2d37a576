"""Time integration of (Delta_f - d/dt) u + q u^alpha = 0 on a radial grid."""

from __future__ import annotations

import csv
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .constants import DEFAULT_THETA, MAX_DT_HALVINGS
from .discretization import Field, RadialGrid, apply_weighted_laplacian, as_field, weighted_laplacian_bands
from .errors import DomainError, NumericalError, PositivityLossError
from .geometry import ModelSpace

logger = logging.getLogger(__name__)


class Source(ABC):
    """A source profile q(r, t) with its radial derivative."""

    @abstractmethod
    def value(self, r: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def radial_derivative(self, r: np.ndarray, t: float) -> np.ndarray:
        ...

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...

    def is_zero(self) -> bool:
        return False

    def scaled(self, factor: float) -> "Source":
        return ScaledSource(self, factor)


@dataclass(frozen=True)
class ConstantSource(Source):
    constant: float = 0.0

    def value(self, r, t):
        return np.full(np.shape(r), float(self.constant))

    def radial_derivative(self, r, t):
        return np.zeros(np.shape(r))

    def describe(self):
        return {"kind": "constant", "value": self.constant}

    def is_zero(self):
        return self.constant == 0.0

    def scaled(self, factor):
        return ConstantSource(self.constant * factor)


@dataclass(frozen=True)
class GaussianBump(Source):
    """q = amplitude * exp(-(r - center)^2 / width^2)."""

    amplitude: float
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError(f"gaussian bump width must be positive, got {self.width}")

    def value(self, r, t):
        r = np.asarray(r, dtype=float)
        return self.amplitude * np.exp(-((r - self.center) / self.width) ** 2)

    def radial_derivative(self, r, t):
        r = np.asarray(r, dtype=float)
        return -2.0 * (r - self.center) / self.width ** 2 * self.value(r, t)

    def describe(self):
        return {"kind": "gaussian_bump", "amplitude": self.amplitude, "center": self.center, "width": self.width}

    def is_zero(self):
        return self.amplitude == 0.0

    def scaled(self, factor):
        return replace(self, amplitude=self.amplitude * factor)


@dataclass(frozen=True, eq=False)
class SeparableSource(Source):
    """q = a(r) b(t) with a' supplied analytically."""

    radial: Callable[[np.ndarray], np.ndarray]
    radial_d1: Callable[[np.ndarray], np.ndarray]
    temporal: Callable[[float], float]
    description: Dict[str, Any] = field(default_factory=dict, compare=False)

    def value(self, r, t):
        return self.radial(np.asarray(r, dtype=float)) * self.temporal(t)

    def radial_derivative(self, r, t):
        return self.radial_d1(np.asarray(r, dtype=float)) * self.temporal(t)

    def describe(self):
        return {"kind": "separable", **self.description}

    @classmethod
    def bump_in_time(cls, amplitude: float, center: float, width: float,
                     temporal: str = "constant", rate: float = 0.0) -> "SeparableSource":
        bump = GaussianBump(amplitude, center, width)
        if temporal == "constant":
            def factor(t):
                return 1.0
        elif temporal == "exponential":
            def factor(t):
                return math.exp(rate * t)
        elif temporal == "linear":
            def factor(t):
                return 1.0 + rate * t
        else:
            raise DomainError(f"unknown temporal factor '{temporal}'")
        description = {"radial": bump.describe(), "temporal": temporal, "rate": rate}
        return cls(lambda r: bump.value(r, 0.0), lambda r: bump.radial_derivative(r, 0.0), factor, description)


class TabulatedSource(Source):
    """q sampled on a tensor (r, t) table; dq/dr by differences of the table."""

    def __init__(self, r_nodes, t_nodes, values, origin: Optional[str] = None):
        self.r_nodes = np.asarray(r_nodes, dtype=float)
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.r_nodes.size, self.t_nodes.size):
            raise DomainError(
                f"table of shape {self.values.shape} does not match {self.r_nodes.size} x {self.t_nodes.size} nodes"
            )
        if self.r_nodes.size < 3 or self.t_nodes.size < 2:
            raise DomainError("a source table needs at least 3 radii and 2 times")
        self.origin = origin
        gradient = np.gradient(self.values, self.r_nodes, axis=0, edge_order=2)
        options = dict(method="linear", bounds_error=False, fill_value=None)
        self._value = RegularGridInterpolator((self.r_nodes, self.t_nodes), self.values, **options)
        self._gradient = RegularGridInterpolator((self.r_nodes, self.t_nodes), gradient, **options)

    def _points(self, r, t):
        r = np.asarray(r, dtype=float)
        return np.stack([r, np.full(r.shape, float(t))], axis=-1)

    def value(self, r, t):
        return self._value(self._points(r, t))

    def radial_derivative(self, r, t):
        return self._gradient(self._points(r, t))

    def describe(self):
        return {"kind": "tabulated", "file": self.origin, "shape": list(self.values.shape)}

    def is_zero(self):
        return not np.any(self.values)

    def scaled(self, factor):
        return TabulatedSource(self.r_nodes, self.t_nodes, self.values * factor, self.origin)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TabulatedSource":
        """Read `r,t,value` rows covering a full tensor grid."""
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            try:
                rows = [(float(row["r"]), float(row["t"]), float(row["value"])) for row in reader]
            except (KeyError, TypeError, ValueError, csv.Error) as e:
                raise DomainError(f"{path}: malformed source table: {e}") from e
        if not rows:
            raise DomainError(f"{path}: source table has no rows")
        data = np.array(rows)
        r_nodes = np.unique(data[:, 0])
        t_nodes = np.unique(data[:, 1])
        values = np.full((r_nodes.size, t_nodes.size), np.nan)
        values[np.searchsorted(r_nodes, data[:, 0]), np.searchsorted(t_nodes, data[:, 1])] = data[:, 2]
        if np.isnan(values).any():
            raise DomainError(f"{path}: table does not cover the full (r, t) grid")
        return cls(r_nodes, t_nodes, values, origin=str(path))


@dataclass(frozen=True)
class ScaledSource(Source):
    base: Source
    factor: float

    def value(self, r, t):
        return self.factor * self.base.value(r, t)

    def radial_derivative(self, r, t):
        return self.factor * self.base.radial_derivative(r, t)

    def describe(self):
        return {"kind": "scaled", "factor": self.factor, "base": self.base.describe()}

    def is_zero(self):
        return self.factor == 0.0 or self.base.is_zero()


@dataclass(frozen=True, eq=False)
class PDEProblem:
    """The equation posed on the cylinder B(x0, r_max) x [t0 - T, t0]."""

    space: ModelSpace
    grid: RadialGrid
    alpha: float
    q: Source
    u0: np.ndarray
    t0: float
    T: float
    dt: float
    theta: float = DEFAULT_THETA
    reaction: str = "euler"

    def __post_init__(self):
        u0 = as_field(self.grid, self.u0)
        if np.any(u0 <= 0):
            raise DomainError("initial data must be strictly positive")
        if not math.isfinite(self.alpha):
            raise DomainError(f"alpha must be finite, got {self.alpha}")
        if not self.T > 0:
            raise DomainError(f"horizon T must be positive, got {self.T}")
        if not 0 < self.dt <= self.T:
            raise DomainError(f"time step must satisfy 0 < dt <= T, got dt = {self.dt}")
        if not 0.5 <= self.theta <= 1.0:
            raise DomainError(f"theta must lie in [0.5, 1], got {self.theta}")
        if self.reaction not in ("euler", "exact"):
            raise DomainError(f"unknown reaction update '{self.reaction}'")

    @property
    def start(self) -> float:
        return self.t0 - self.T

    def scaled(self, factor: float) -> "PDEProblem":
        """The problem solved by factor * u: q scales by factor^(1 - alpha)."""
        return replace(self, u0=self.u0 * factor, q=self.q.scaled(factor ** (1.0 - self.alpha)))

    def describe(self) -> Dict[str, Any]:
        return {
            "space": {"label": self.space.label, "kind": self.space.kind, "dimension": self.space.dimension,
                      "params": dict(self.space.params)},
            "grid": {"r_max": self.grid.r_max, "n": self.grid.n},
            "alpha": self.alpha,
            "q": self.q.describe(),
            "t0": self.t0,
            "T": self.T,
            "dt": self.dt,
            "theta": self.theta,
            "reaction": self.reaction,
        }


@dataclass
class SpaceTimeSolution:
    """Frames u(r_i, t_k) of a solve; every frame strictly positive."""

    times: np.ndarray
    frames: np.ndarray
    problem: PDEProblem
    dt_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.frames = np.asarray(self.frames, dtype=float)
        if self.times.size < 2 or self.frames.shape != (self.times.size, self.problem.grid.n):
            raise DomainError(
                f"solution needs >= 2 frames matching the grid, got {self.frames.shape} for {self.times.size} times"
            )
        if np.any(self.frames <= 0):
            raise PositivityLossError("solution contains nonpositive values")

    @property
    def grid(self) -> RadialGrid:
        return self.problem.grid

    @property
    def space(self) -> ModelSpace:
        return self.problem.space

    @property
    def elapsed(self) -> np.ndarray:
        """Clock s = t - (t0 - T)."""
        return self.times - self.problem.start

    def frame_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        spacing = np.min(np.diff(self.times))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)) + 1e-6 * spacing:
            raise DomainError(f"time {t} is not a recorded frame")
        return k

    def source_on_frames(self) -> np.ndarray:
        nodes = self.grid.nodes
        return np.array([self.problem.q.value(nodes, t) for t in self.times])

    def source_gradient_on_frames(self) -> np.ndarray:
        nodes = self.grid.nodes
        return np.array([self.problem.q.radial_derivative(nodes, t) for t in self.times])

    def scaled(self, factor: float) -> "SpaceTimeSolution":
        return SpaceTimeSolution(self.times.copy(), self.frames * factor, self.problem.scaled(factor),
                                 list(self.dt_history))


def _react(problem: PDEProblem, u: Field, t: float, dt: float) -> Field:
    q = problem.q.value(problem.grid.nodes, t)
    alpha = problem.alpha
    if problem.reaction == "euler":
        return u + dt * q * u ** alpha
    if alpha == 1.0:
        return u * np.exp(q * dt)
    base = u ** (1.0 - alpha) + (1.0 - alpha) * q * dt
    if np.any(base <= 0):
        raise PositivityLossError(f"reaction flow leaves the positive cone within the step at t = {t}", time=t)
    return base ** (1.0 / (1.0 - alpha))


def step(problem: PDEProblem, u, t: float, dt: Optional[float] = None) -> Field:
    """One IMEX step: explicit reaction, theta-implicit diffusion, zero flux at both ends."""
    dt = problem.dt if dt is None else dt
    u = as_field(problem.grid, u)
    if np.any(u <= 0):
        raise PositivityLossError(f"state is not positive at t = {t}", time=t)

    with np.errstate(over="ignore", invalid="ignore"):
        reacted = _react(problem, u, t, dt)
    if not np.all(np.isfinite(reacted)):
        raise PositivityLossError(f"reaction term overflowed at t = {t}", time=t)

    lower, diag, upper = weighted_laplacian_bands(problem.space, problem.grid)
    theta = problem.theta
    rhs = reacted
    if theta < 1.0:
        explicit = diag * reacted
        explicit[:-1] += upper[:-1] * reacted[1:]
        explicit[1:] += lower[1:] * reacted[:-1]
        rhs = reacted + (1.0 - theta) * dt * explicit

    ab = np.zeros((3, problem.grid.n))
    ab[0, 1:] = -theta * dt * upper[:-1]
    ab[1] = 1.0 - theta * dt * diag
    ab[2, :-1] = -theta * dt * lower[1:]
    try:
        new = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"tridiagonal solve failed at t = {t}: {e}") from e

    if not np.all(np.isfinite(new)) or np.any(new <= 0):
        raise PositivityLossError(f"step from t = {t} with dt = {dt:g} lost positivity", time=t)
    return new


def _advance(problem: PDEProblem, u: Field, t: float, dt: float, history: List[float]) -> Field:
    for halvings in range(MAX_DT_HALVINGS + 1):
        substeps = 2 ** halvings
        h = dt / substeps
        try:
            state = u
            for j in range(substeps):
                state = step(problem, state, t + j * h, h)
        except PositivityLossError as e:
            if halvings == MAX_DT_HALVINGS:
                raise PositivityLossError(
                    f"positivity lost at t = {t} even after {MAX_DT_HALVINGS} step halvings: {e}", time=t
                ) from e
            logger.info("Positivity lost at t=%g with dt=%g, halving", t, h)
            continue
        except NumericalError as e:
            raise NumericalError(f"solve failed at t = {t}: {e}") from e
        history.extend([h] * substeps)
        return state
    raise AssertionError("unreachable")


def solve(problem: PDEProblem) -> SpaceTimeSolution:
    """Integrate over [t0 - T, t0] in ceil(T / dt) uniform steps, recording every frame."""
    n_steps = max(1, math.ceil(problem.T / problem.dt - 1e-9))
    times = problem.start + np.linspace(0.0, problem.T, n_steps + 1)
    frames = np.empty((n_steps + 1, problem.grid.n))
    frames[0] = as_field(problem.grid, problem.u0)
    history: List[float] = []

    logger.debug("Solving %s with %d steps of %g", problem.space.label, n_steps, problem.T / n_steps)
    for k in range(n_steps):
        frames[k + 1] = _advance(problem, frames[k], times[k], times[k + 1] - times[k], history)

    return SpaceTimeSolution(times, frames, problem, history)


def pde_residual(solution: SpaceTimeSolution) -> float:
    """Max of |Delta_f u - u_t + q u^alpha| over interior nodes and frames."""
    if solution.times.size < 3:
        raise DomainError("the residual needs at least 3 frames")
    problem = solution.problem
    nodes = solution.grid.nodes
    worst = 0.0
    for k in range(1, solution.times.size - 1):
        u = solution.frames[k]
        lap = apply_weighted_laplacian(problem.space, solution.grid, u)
        dudt = (solution.frames[k + 1] - solution.frames[k - 1]) / (solution.times[k + 1] - solution.times[k - 1])
        reaction = problem.q.value(nodes, solution.times[k]) * u ** problem.alpha
        residual = np.abs(lap - dudt + reaction)[1:-1]
        worst = max(worst, float(np.max(residual)))
    return worst
