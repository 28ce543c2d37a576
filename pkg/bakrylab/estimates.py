"""Quantities of the elliptic gradient estimate and the Harnack inequality.

All estimates are evaluated on the cylinder Q_{R,T} = B(x0, R) x [t0 - T, t0] with x0 the
pole of the model space. The constant delta of the estimate is fixed to 1 (beta - h >= 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    CUTOFF_SAMPLES,
    DEFAULT_CUTOFF_EXPONENT,
    DEFAULT_D_FACTOR,
    HARNACK_TOL,
    MEASURED_CUTOFF_EXPONENTS,
)
from .discretization import RadialGrid, apply_weighted_laplacian, gradient_magnitude, radial_derivative
from .errors import ClockError, DomainError, HypothesisViolation, StatsInconsistencyError
from .geometry import drift_coefficient, ricci_lower_bound
from .reports import EstimateReport
from .solver import SpaceTimeSolution

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class EstimateCase(str, Enum):
    """The three exponent regimes of the gradient estimate."""

    SUPERLINEAR = "alpha>=1"
    SUBLINEAR = "0<alpha<1"
    NONPOSITIVE = "alpha<=0"

    @classmethod
    def for_alpha(cls, alpha: float) -> "EstimateCase":
        if alpha >= 1:
            return cls.SUPERLINEAR
        if alpha > 0:
            return cls.SUBLINEAR
        return cls.NONPOSITIVE

    def admits(self, alpha: float) -> bool:
        return EstimateCase.for_alpha(alpha) is self


@dataclass(frozen=True)
class CylinderStats:
    """Scalars of the estimate over Q_{R,T}."""

    D: float
    M_inf: float
    beta: float
    q_plus_norm: float
    grad_q_norm: float
    mu: float
    K: float
    R: float
    t0: float
    T: float
    alpha: float

    def __post_init__(self):
        if not self.M_inf > 0:
            raise StatsInconsistencyError(f"infimum of u must be positive, got {self.M_inf}")
        if self.M_inf > self.D:
            raise StatsInconsistencyError(f"infimum {self.M_inf} exceeds the upper bound D = {self.D}")
        if self.beta < 1:
            raise StatsInconsistencyError(f"beta must be >= 1, got {self.beta}")

    @property
    def start(self) -> float:
        return self.t0 - self.T

    def clock(self, t: ArrayLike) -> ArrayLike:
        """Elapsed time s = t - (t0 - T); the initial slice is excluded."""
        s = np.asarray(t, dtype=float) - self.start
        if np.any(s <= 1e-14 * max(1.0, abs(self.start))):
            raise ClockError(f"time {t} lies on or before the initial slice t0 - T = {self.start}")
        return float(s) if np.ndim(s) == 0 else s

    def as_dict(self) -> Dict[str, float]:
        return {
            "D": self.D, "M_inf": self.M_inf, "beta": self.beta, "q_plus_norm": self.q_plus_norm,
            "grad_q_norm": self.grad_q_norm, "mu": self.mu, "K": self.K, "R": self.R,
            "t0": self.t0, "T": self.T, "alpha": self.alpha,
        }


class ConstantFit(NamedTuple):
    C_fit: float
    worst_point: Dict[str, float]


def _first_violation(solution: SpaceTimeSolution, D: float, mask: np.ndarray) -> Optional[Dict[str, float]]:
    region = solution.frames[:, mask]
    if np.all(region <= D):
        return None
    k, i = np.unravel_index(int(np.argmax(region)), region.shape)
    return {"r": float(solution.grid.nodes[mask][i]), "t": float(solution.times[k]), "u": float(region[k, i])}


def log_transform(solution: SpaceTimeSolution, D: float, R: Optional[float] = None) -> np.ndarray:
    """h = ln(u / D) on every frame; u <= D is required on B(x0, R) (everywhere if R is None)."""
    if not D > 0:
        raise DomainError(f"D must be positive, got {D}")
    mask = np.ones(solution.grid.n, dtype=bool) if R is None else solution.grid.within(R)
    point = _first_violation(solution, D, mask)
    if point is not None:
        raise HypothesisViolation(
            f"u = {point['u']:.6g} exceeds D = {D:.6g} at r = {point['r']:.6g}, t = {point['t']:.6g}", point
        )
    return np.log(solution.frames / D)


def transformed_residual(solution: SpaceTimeSolution, D: float, R: Optional[float] = None) -> float:
    """Max residual of Delta_f h - h_t + |grad h|^2 + q (D e^h)^(alpha-1) over interior points."""
    h = log_transform(solution, D, R)
    if solution.times.size < 3:
        raise DomainError("the residual needs at least 3 frames")
    problem = solution.problem
    grid = solution.grid
    mask = np.ones(grid.n, dtype=bool) if R is None else grid.within(R)
    mask[0] = mask[-1] = False

    worst = 0.0
    for k in range(1, solution.times.size - 1):
        lap = apply_weighted_laplacian(problem.space, grid, h[k])
        dhdt = (h[k + 1] - h[k - 1]) / (solution.times[k + 1] - solution.times[k - 1])
        grad2 = radial_derivative(grid, h[k]) ** 2
        reaction = problem.q.value(grid.nodes, solution.times[k]) * (D * np.exp(h[k])) ** (problem.alpha - 1.0)
        residual = np.abs(lap - dhdt + grad2 + reaction)[mask]
        worst = max(worst, float(np.max(residual)))
    return worst


def compute_w(grid: RadialGrid, h, beta: float, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """w = |grad h|^2 / (beta - h)^2 for one frame or a stack of frames."""
    h = np.asarray(h, dtype=float)
    gap = beta - h
    checked = gap if mask is None else gap[..., mask]
    if np.any(checked < 1.0 - 1e-12):
        raise StatsInconsistencyError(f"beta - h must be >= 1, found {float(np.min(checked)):.6g}")
    if h.ndim == 1:
        return radial_derivative(grid, h) ** 2 / gap ** 2
    return np.array([radial_derivative(grid, row) ** 2 for row in h]) / gap ** 2


def cylinder_stats(solution: SpaceTimeSolution, R: float, D: Optional[float] = None) -> CylinderStats:
    """Assemble D, M_inf, beta, ||q+||, ||grad q||, mu and K for Q_{R,T}."""
    grid = solution.grid
    if not 0 < R <= grid.r_max / 2 * (1 + 1e-12):
        raise DomainError(f"R = {R} must lie in (0, r_max/2] = (0, {grid.r_max / 2}]")

    mask = grid.within(R)
    region = solution.frames[:, mask]
    u_max = float(np.max(region))
    if D is None:
        D = DEFAULT_D_FACTOR * u_max
    elif D < u_max:
        point = _first_violation(solution, D, mask)
        raise HypothesisViolation(f"supplied D = {D} is below max u = {u_max} on the cylinder", point)

    half = grid.within(R / 2)
    beta = float(np.max(np.abs(np.log(solution.frames[:, half] / D)))) + 1.0

    q = solution.source_on_frames()[:, mask]
    dq = solution.source_gradient_on_frames()[:, mask]
    problem = solution.problem
    return CylinderStats(
        D=float(D),
        M_inf=float(np.min(region)),
        beta=beta,
        q_plus_norm=float(np.max(np.maximum(q, 0.0))),
        grad_q_norm=float(np.max(np.abs(dq))),
        mu=float(drift_coefficient(problem.space, 1.0)),
        K=ricci_lower_bound(problem.space, R),
        R=float(R),
        t0=problem.t0,
        T=problem.T,
        alpha=problem.alpha,
    )


def _resolve_case(case: Optional[EstimateCase], stats: CylinderStats) -> EstimateCase:
    if case is None:
        return EstimateCase.for_alpha(stats.alpha)
    case = EstimateCase(case)
    if not case.admits(stats.alpha):
        raise DomainError(f"case {case.value} does not apply to alpha = {stats.alpha}")
    return case


def source_terms(case: Optional[EstimateCase], stats: CylinderStats) -> Tuple[float, float]:
    """The q-dependent terms (A, B) of the estimate bracket."""
    case = _resolve_case(case, stats)
    alpha = stats.alpha
    base = stats.D if case is EstimateCase.SUPERLINEAR else stats.M_inf
    coefficient = 1.0 if case is EstimateCase.NONPOSITIVE else math.sqrt(alpha)
    A = coefficient * base ** ((alpha - 1.0) / 2.0) * math.sqrt(stats.q_plus_norm)
    B = base ** ((alpha - 1.0) / 3.0) * stats.grad_q_norm ** (1.0 / 3.0)
    return A, B


def estimate_bracket(case: Optional[EstimateCase], stats: CylinderStats, t: ArrayLike) -> ArrayLike:
    """Bracketed sum of the gradient estimate, without the constant C(delta)."""
    s = stats.clock(t)
    A, B = source_terms(case, stats)
    spatial = math.sqrt((1.0 + abs(stats.mu)) / stats.R)
    return spatial + 1.0 / np.sqrt(s) + math.sqrt(stats.K) + A + B


def fit_constant(solution: SpaceTimeSolution, stats: CylinderStats,
                 case: Optional[EstimateCase] = None) -> ConstantFit:
    """Smallest C with |grad u|/u <= C * bracket(t) * (beta + ln(D/u)) on Q_{R/2,T}, t != t0 - T."""
    log_transform(solution, stats.D, stats.R)
    case = _resolve_case(case, stats)
    grid = solution.grid
    half = grid.within(stats.R / 2)
    nodes = grid.nodes[half]

    best = 0.0
    point = {"r": 0.0, "t": float(solution.times[-1])}
    for k in range(1, solution.times.size):
        u = solution.frames[k]
        lhs = (gradient_magnitude(grid, u) / u)[half]
        denominator = estimate_bracket(case, stats, solution.times[k]) * (stats.beta + np.log(stats.D / u[half]))
        ratio = lhs / denominator
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best = float(ratio[i])
            point = {"r": float(nodes[i]), "t": float(solution.times[k])}
    return ConstantFit(best, point)


def theorem11_report(solution: SpaceTimeSolution, stats: CylinderStats,
                     case: Optional[EstimateCase] = None) -> EstimateReport:
    case = _resolve_case(case, stats)
    fit = fit_constant(solution, stats, case)
    return EstimateReport(
        check="theorem11",
        case=case.value,
        constant_name="C_fit",
        constant=fit.C_fit,
        worst_margin=0.0,
        worst_point=fit.worst_point,
        passed=bool(np.isfinite(fit.C_fit) and fit.C_fit >= 0),
        grid={"n": solution.grid.n, "dt": solution.problem.dt},
        extra={"stats": stats.as_dict()},
    )


def smoothstep(x: ArrayLike) -> np.ndarray:
    """C^2 quintic step, 0 at x <= 0 and 1 at x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


def smoothstep_d1(x: ArrayLike) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return 30.0 * x ** 2 * (1.0 - x) ** 2


def smoothstep_d2(x: ArrayLike) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)


@dataclass(frozen=True)
class CutoffFunction:
    """Separable cutoff psi(r, t) = eta(r) xi(t).

    eta = s(2 - 2r/R)^p with s the quintic smoothstep and p large enough that
    |eta'|/eta^a and |eta''|/eta^a stay bounded; xi rises from 0 at t0 - T to 1
    at min(tau, t0 - T/2).
    """

    R: float
    T: float
    t0: float
    tau: float
    a: float = DEFAULT_CUTOFF_EXPONENT
    power: int = 3

    @property
    def start(self) -> float:
        return self.t0 - self.T

    @property
    def rise_end(self) -> float:
        return min(self.tau, self.t0 - self.T / 2)

    def _x(self, r):
        return 2.0 - 2.0 * np.asarray(r, dtype=float) / self.R

    def _y(self, t):
        return (np.asarray(t, dtype=float) - self.start) / (self.rise_end - self.start)

    def eta(self, r):
        return smoothstep(self._x(r)) ** self.power

    def eta_r(self, r):
        x = self._x(r)
        p = self.power
        return -(2.0 / self.R) * p * smoothstep(x) ** (p - 1) * smoothstep_d1(x)

    def eta_rr(self, r):
        x = self._x(r)
        p = self.power
        s, s1, s2 = smoothstep(x), smoothstep_d1(x), smoothstep_d2(x)
        second = p * s ** (p - 1) * s2
        if p > 1:
            second = second + p * (p - 1) * s ** (p - 2) * s1 ** 2
        return (4.0 / self.R ** 2) * second

    def xi(self, t):
        return smoothstep(self._y(t))

    def xi_t(self, t):
        return smoothstep_d1(self._y(t)) / (self.rise_end - self.start)

    def value(self, r, t):
        return self.eta(r) * self.xi(t)

    def d_r(self, r, t):
        return self.eta_r(r) * self.xi(t)

    def d_rr(self, r, t):
        return self.eta_rr(r) * self.xi(t)

    def d_t(self, r, t):
        return self.eta(r) * self.xi_t(t)

    def sample(self, samples: int = CUTOFF_SAMPLES) -> Tuple[np.ndarray, np.ndarray]:
        """A samples x samples (r, t) lattice covering [0, 1.25 R] x [t0 - T, t0]."""
        r = np.linspace(0.0, 1.25 * self.R, samples)
        t = np.linspace(self.start, self.t0, samples)
        return np.meshgrid(r, t, indexing="ij")

    def measure_constants(self, exponents: Sequence[float] = MEASURED_CUTOFF_EXPONENTS,
                          samples: int = CUTOFF_SAMPLES) -> Dict[str, float]:
        """Measured C_a for each exponent a and the time constant C."""
        r, t = self.sample(samples)
        psi = self.value(r, t)
        positive = psi > 0
        constants = {}
        for a in exponents:
            denom = np.where(positive, psi, 1.0) ** a
            first = np.where(positive, np.abs(self.d_r(r, t)) / denom, 0.0)
            second = np.where(positive, np.abs(self.d_rr(r, t)) / denom, 0.0)
            constants[f"C_{a:g}"] = float(max(self.R * first.max(), self.R ** 2 * second.max()))
        half = np.where(positive, psi, 1.0) ** 0.5
        time_ratio = np.where(positive, np.abs(self.d_t(r, t)) / half, 0.0)
        constants["C_t"] = float(time_ratio.max() * (self.tau - self.start))
        return constants

    def check_properties(self, samples: int = CUTOFF_SAMPLES) -> Dict[str, bool]:
        """Evaluate the four cutoff properties on the sample lattice."""
        r, t = self.sample(samples)
        psi = self.value(r, t)
        inner = (r <= self.R / 2) & (t >= self.t0 - self.T / 2)
        radial_flat = r <= self.R / 2
        constants = self.measure_constants(samples=samples)
        return {
            "bounded": bool(np.all((psi >= 0) & (psi <= 1))),
            "one_on_inner_cylinder": bool(np.all(psi[inner] == 1.0)),
            "radially_nonincreasing": bool(np.all(np.diff(psi, axis=0) <= 0)),
            "flat_on_half_ball": bool(np.all(self.d_r(r, t)[radial_flat] == 0.0)),
            "derivative_ratios_finite": bool(all(np.isfinite(v) for v in constants.values())),
            "vanishes_at_start": bool(np.all(self.value(r[:, 0], self.start) == 0.0)),
        }


def build_cutoff(R: float, T: float, t0: float, tau: float, a: float = DEFAULT_CUTOFF_EXPONENT) -> CutoffFunction:
    """Construct the space-time cutoff for the cylinder Q_{R,T}."""
    if R < 2:
        raise DomainError(f"cutoff needs R >= 2, got {R}")
    if not T > 0:
        raise DomainError(f"cutoff needs T > 0, got {T}")
    if not (t0 - T < tau <= t0):
        raise DomainError(f"tau = {tau} must lie in (t0 - T, t0] = ({t0 - T}, {t0}]")
    if not 0 < a < 1:
        raise DomainError(f"cutoff exponent must lie in (0, 1), got {a}")
    power = max(1, math.ceil(2.0 / (3.0 * (1.0 - a)) - 1e-12))
    return CutoffFunction(R=R, T=T, t0=t0, tau=tau, a=a, power=power)


def harnack_rate(t: ArrayLike, stats: CylinderStats, case: Optional[EstimateCase] = None) -> ArrayLike:
    """1/sqrt(t - (t0 - T)) + sqrt(K) + lambda with lambda = max(A, B)."""
    s = stats.clock(t)
    lam = max(source_terms(case, stats))
    return 1.0 / np.sqrt(s) + math.sqrt(stats.K) + lam


def harnack_gamma(r: ArrayLike, t: float, stats: CylinderStats, C: float,
                  case: Optional[EstimateCase] = None) -> ArrayLike:
    """Gamma(r, t) = exp(-C (1/sqrt(t - (t0 - T)) + sqrt(K) + lambda) r)."""
    if C < 0:
        raise DomainError(f"Harnack constant must be nonnegative, got {C}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("distance must be nonnegative")
    gamma = np.exp(-C * harnack_rate(t, stats, case) * r)
    return float(gamma) if gamma.ndim == 0 else gamma


def _harnack_potential(solution: SpaceTimeSolution, D: float) -> np.ndarray:
    """v = ln(D e / u) = 1 + ln(D/u) >= 1 on every frame."""
    log_transform(solution, D)
    return 1.0 + np.log(D / solution.frames)


def fit_harnack_constant(solution: SpaceTimeSolution, stats: CylinderStats,
                         case: Optional[EstimateCase] = None) -> ConstantFit:
    """Smallest C with |d ln(1 + ln(D/u))| <= C * rate(t) * dr on every grid cell, t != t0 - T.

    Summing the cell bound along a radial geodesic gives the Harnack inequality with this C.
    """
    v = _harnack_potential(solution, stats.D)
    grid = solution.grid
    best = 0.0
    point = {"r": 0.0, "t": float(solution.times[-1])}
    for k in range(1, solution.times.size):
        slope = np.abs(np.diff(np.log(v[k]))) / grid.dr / harnack_rate(solution.times[k], stats, case)
        i = int(np.argmax(slope))
        if slope[i] > best:
            best = float(slope[i])
            point = {"r": float(grid.faces[i]), "t": float(solution.times[k])}
    return ConstantFit(best, point)


def harnack_check(solution: SpaceTimeSolution, stats: CylinderStats, C: float, t: float,
                  case: Optional[EstimateCase] = None) -> EstimateReport:
    """Check u(y,t) <= u(x,t)^Gamma (D e)^(1-Gamma) over all node pairs at time t."""
    k = solution.frame_index(t)
    t = float(solution.times[k])
    u = solution.frames[k]
    if np.any(u > stats.D):
        i = int(np.argmax(u))
        point = {"r": float(solution.grid.nodes[i]), "t": t, "u": float(u[i])}
        raise HypothesisViolation(f"u exceeds D = {stats.D:.6g} at r = {point['r']:.6g}", point)

    nodes = solution.grid.nodes
    log_u = np.log(u)
    log_de = math.log(stats.D) + 1.0

    worst = math.inf
    point: Dict[str, float] = {}
    for across_pole, distance in ((False, np.abs(nodes[:, None] - nodes[None, :])),
                                  (True, nodes[:, None] + nodes[None, :])):
        gamma = harnack_gamma(distance, t, stats, C, case)
        margin = gamma * log_u[:, None] + (1.0 - gamma) * log_de - log_u[None, :]
        ix, iy = np.unravel_index(int(np.argmin(margin)), margin.shape)
        if margin[ix, iy] < worst:
            worst = float(margin[ix, iy])
            point = {"rx": float(nodes[ix]), "ry": float(nodes[iy]), "t": t, "across_pole": float(across_pole)}

    return EstimateReport(
        check="harnack",
        case=_resolve_case(case, stats).value,
        constant_name="C_used",
        constant=float(C),
        worst_margin=worst,
        worst_point=point,
        passed=bool(worst >= -HARNACK_TOL),
        tolerances={"margin": HARNACK_TOL},
        grid={"n": solution.grid.n, "dt": solution.problem.dt},
    )
