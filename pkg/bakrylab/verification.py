"""Identity and theorem audits: Bochner formula, the w-inequality, the ODE reduction, decay sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .constants import (
    DEFAULT_R_LIST,
    LEMMA21_SLACK,
    LIOUVILLE_EXPONENT_RANGE,
    ODE_ATOL,
    ODE_RTOL,
    ODE_TOL,
)
from .discretization import (
    RadialGrid,
    apply_weighted_laplacian,
    as_field,
    gradient_magnitude,
    radial_derivative,
    second_radial_derivative,
)
from .errors import DomainError, HypothesisViolation
from .estimates import CylinderStats, compute_w, cylinder_stats, log_transform, source_terms
from .geometry import ModelSpace, bakry_emery_eigenvalues, ricci_lower_bound
from .reports import EstimateReport
from .solver import PDEProblem, SpaceTimeSolution, solve

logger = logging.getLogger(__name__)

# Stencil margin: two nodes in space, one frame in time.
SPACE_MARGIN = 2
TIME_MARGIN = 1


def bochner_residual(space: ModelSpace, grid: RadialGrid, u) -> float:
    """Max interior residual of the Bochner formula for a radial u.

    1/2 Delta_f |grad u|^2 - |Hess u|^2 - <grad Delta_f u, grad u> - Ric_f(grad u, grad u)
    """
    u = as_field(grid, u)
    if grid.n < 2 * SPACE_MARGIN + 1:
        raise DomainError(f"grid of {grid.n} nodes has no interior")
    du = radial_derivative(grid, u)
    d2u = second_radial_derivative(grid, u)
    interior = slice(SPACE_MARGIN, grid.n - SPACE_MARGIN)
    r = grid.nodes[interior]

    half_lap = 0.5 * apply_weighted_laplacian(space, grid, du ** 2)[interior]
    slope = space.warp.d1(r) / space.warp.value(r)
    hessian = d2u[interior] ** 2 + (space.dimension - 1) * (slope * du[interior]) ** 2
    cross = radial_derivative(grid, apply_weighted_laplacian(space, grid, u))[interior] * du[interior]
    radial_eig, _ = bakry_emery_eigenvalues(space, r)
    ricci = radial_eig * du[interior] ** 2
    return float(np.max(np.abs(half_lap - hessian - cross - ricci)))


@dataclass
class GapReport:
    """Most negative LHS - RHS of the w-inequality over the checked points."""

    min_gap: float
    location: Dict[str, float]
    tolerance: float
    scale: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.min_gap >= -self.tolerance

    def to_report(self, case: str = "", grid: Optional[Dict[str, float]] = None) -> EstimateReport:
        return EstimateReport(
            check="lemma21",
            case=case,
            constant_name="min_gap",
            constant=self.min_gap,
            worst_margin=self.min_gap,
            worst_point=dict(self.location),
            passed=self.passed,
            tolerances={"gap": self.tolerance, "slack": LEMMA21_SLACK},
            grid=dict(grid or {}),
            extra={"scale": self.scale, "checked": self.checked, "skipped": self.skipped},
        )


def lemma21_gap(solution: SpaceTimeSolution, stats: CylinderStats) -> GapReport:
    """Evaluate (Delta_f - d/dt) w against its lower bound on the interior of Q_{R,T}."""
    grid = solution.grid
    space = solution.space
    problem = solution.problem
    D, beta, K, alpha = stats.D, stats.beta, stats.K, stats.alpha

    h = log_transform(solution, D, stats.R)
    inside = grid.within(stats.R)
    w = compute_w(grid, h, beta, inside)

    n_frames = solution.times.size
    interior = np.zeros(grid.n, dtype=bool)
    interior[SPACE_MARGIN:grid.n - SPACE_MARGIN] = True
    nodes_checked = inside & interior
    total = int(inside.sum()) * n_frames
    if n_frames < 2 * TIME_MARGIN + 1 or not nodes_checked.any():
        return GapReport(0.0, {"r": 0.0, "t": float(solution.times[0])}, 0.0, 0.0, 0, total)

    q = solution.source_on_frames()
    dq = solution.source_gradient_on_frames()
    min_gap = math.inf
    location: Dict[str, float] = {}
    scale = 0.0
    checked = 0
    for k in range(TIME_MARGIN, n_frames - TIME_MARGIN):
        hk, wk = h[k], w[k]
        lhs = apply_weighted_laplacian(space, grid, wk)
        lhs -= (w[k + 1] - w[k - 1]) / (solution.times[k + 1] - solution.times[k - 1])

        dh = radial_derivative(grid, hk)
        dw = radial_derivative(grid, wk)
        gap_h = beta - hk
        power = solution.frames[k] ** (alpha - 1.0)
        rhs = (
            2.0 * (hk + 1.0 - beta) / gap_h * dh * dw
            + 2.0 * gap_h * wk ** 2
            - 2.0 * (space.dimension - 1) * K * wk
            - 2.0 * (alpha + hk / gap_h + (1.0 - beta) / gap_h) * power * q[k] * wk
            - 2.0 / gap_h ** 2 * power * dh * dq[k]
        )

        gap = (lhs - rhs)[nodes_checked]
        scale = max(scale, float(np.max(np.abs(lhs[nodes_checked]) + np.abs(rhs[nodes_checked]))))
        checked += gap.size
        i = int(np.argmin(gap))
        if gap[i] < min_gap:
            min_gap = float(gap[i])
            location = {"r": float(grid.nodes[nodes_checked][i]), "t": float(solution.times[k])}

    tolerance = LEMMA21_SLACK * (grid.dr ** 2 + problem.dt) * scale
    logger.debug("w-inequality: min gap %.3e, tolerance %.3e over %d points", min_gap, tolerance, checked)
    return GapReport(min_gap, location, tolerance, scale, checked, total - checked)


def bernoulli_closed_form(t, q_tilde: float, alpha: float, u0: float):
    """Solution of du/dt = q u^alpha with u(0) = u0."""
    t = np.asarray(t, dtype=float)
    if alpha == 1.0:
        return u0 * np.exp(q_tilde * t)
    base = u0 ** (1.0 - alpha) + (1.0 - alpha) * q_tilde * t
    return base ** (1.0 / (1.0 - alpha))


def bernoulli_singularity(q_tilde: float, alpha: float, u0: float) -> Optional[float]:
    """Time at which u^(1-alpha) reaches zero, or None when it never does."""
    if alpha == 1.0 or q_tilde == 0.0:
        return None
    return -u0 ** (1.0 - alpha) / ((1.0 - alpha) * q_tilde)


def ode_ancient_check(q_tilde: float, alpha: float, u0: float, t_span: Tuple[float, float],
                      samples: int = 201) -> EstimateReport:
    """Integrate du/dt = q u^alpha adaptively and compare with the closed form."""
    if not u0 > 0:
        raise DomainError(f"u0 must be positive, got {u0}")
    t_a, t_b = map(float, t_span)
    if t_a == t_b:
        raise DomainError("time span is empty")

    t_star = bernoulli_singularity(q_tilde, alpha, u0)
    if t_star is not None and min(t_a, t_b) <= t_star <= max(t_a, t_b):
        raise DomainError(f"closed form is singular at t* = {t_star:.6g}, inside [{t_a}, {t_b}]")

    # closed form is anchored at t = 0
    start = float(bernoulli_closed_form(t_a, q_tilde, alpha, u0))
    t_eval = np.linspace(t_a, t_b, samples)
    result = solve_ivp(
        lambda t, y: q_tilde * y ** alpha,
        (t_a, t_b),
        [start],
        method="RK45",
        t_eval=t_eval,
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
    )
    if not result.success:
        raise DomainError(f"ODE integration failed: {result.message}")

    exact = bernoulli_closed_form(t_eval, q_tilde, alpha, u0)
    deviation = np.abs(result.y[0] - exact) / np.abs(exact)
    worst = int(np.argmax(deviation))
    max_deviation = float(deviation[worst])
    obstruction = t_star if (alpha > 1 and q_tilde < 0) else None
    return EstimateReport(
        check="ode",
        case=f"alpha={alpha:g}",
        constant_name="max_deviation",
        constant=max_deviation,
        worst_margin=ODE_TOL - max_deviation,
        worst_point={"t": float(t_eval[worst])},
        passed=bool(max_deviation <= ODE_TOL),
        tolerances={"deviation": ODE_TOL, "rtol": ODE_RTOL, "atol": ODE_ATOL},
        extra={
            "q_tilde": q_tilde,
            "u0": u0,
            "t_span": [t_a, t_b],
            "singularity": t_star,
            "backward_singularity": obstruction,
            "evaluations": int(result.nfev),
        },
    )


@dataclass
class LiouvilleTable:
    """Estimate bound at the cylinder center for a range of cylinder radii."""

    rows: List[Dict[str, float]] = field(default_factory=list)
    exponent: float = float("nan")

    @property
    def decreasing(self) -> bool:
        bounds = [row["bound"] for row in self.rows]
        return all(b > a for a, b in zip(bounds[1:], bounds[:-1]))

    @property
    def exponent_in_range(self) -> bool:
        low, high = LIOUVILLE_EXPONENT_RANGE
        return low <= self.exponent <= high

    def to_report(self, case: str = "") -> EstimateReport:
        bounds = [row["bound"] for row in self.rows]
        drops = [a - b for a, b in zip(bounds[:-1], bounds[1:])]
        return EstimateReport(
            check="liouville_sweep",
            case=case,
            constant_name="exponent",
            constant=self.exponent,
            worst_margin=min(drops) if drops else 0.0,
            worst_point={"R": self.rows[int(np.argmin(drops)) + 1]["R"]} if drops else {},
            passed=self.decreasing and self.exponent_in_range,
            tolerances={"exponent_low": LIOUVILLE_EXPONENT_RANGE[0], "exponent_high": LIOUVILLE_EXPONENT_RANGE[1]},
            extra={"rows": self.rows, "mechanism_only": True},
        )


def liouville_decay_sweep(problem: PDEProblem, R_list: Sequence[float] = DEFAULT_R_LIST,
                          solution: Optional[SpaceTimeSolution] = None) -> LiouvilleTable:
    """Tabulate the estimate bound (C = 1) at the pole and time t0 for every R."""
    R_list = sorted(float(R) for R in R_list)
    if len(R_list) < 2:
        raise DomainError("the decay sweep needs at least two radii")
    K = ricci_lower_bound(problem.space, R_list[-1])
    if K > 0:
        raise HypothesisViolation(f"decay sweep needs Ric_f >= 0, found K = {K:.6g} on B(x0, {R_list[-1]:g})",
                                  {"R": R_list[-1], "K": K})
    if not problem.q.is_zero():
        raise HypothesisViolation("decay sweep needs q = 0")
    if problem.grid.r_max < 2 * R_list[-1]:
        raise DomainError(f"r_max = {problem.grid.r_max} must be at least 2 max R = {2 * R_list[-1]}")

    if solution is None:
        solution = solve(problem)
    grid = solution.grid
    center = float(solution.frames[-1, 0])
    table = LiouvilleTable()
    for R in R_list:
        stats: CylinderStats = cylinder_stats(solution, R)
        A, B = source_terms(None, stats)
        potential = stats.beta + math.log(stats.D / center)
        spatial = math.sqrt((1.0 + abs(stats.mu)) / R)
        bracket = spatial + 1.0 / math.sqrt(stats.T) + math.sqrt(stats.K) + A + B
        half = grid.within(R / 2)
        ratio = (gradient_magnitude(grid, solution.frames[-1]) / solution.frames[-1])[half]
        table.rows.append({
            "R": R,
            "bound": bracket * potential,
            "spatial_term": spatial * potential,
            "beta": stats.beta,
            "D": stats.D,
            "gradient_ratio": float(np.max(ratio)),
        })

    logR = np.log([row["R"] for row in table.rows])
    logS = np.log([row["spatial_term"] for row in table.rows])
    table.exponent = float(np.polyfit(logR, logS, 1)[0])
    logger.info("Decay sweep on %s: exponent %.3f", problem.space.label, table.exponent)
    return table


def maximum_principle_check(solution: SpaceTimeSolution) -> EstimateReport:
    """For q = 0 every frame stays within the range of the initial data."""
    if not solution.problem.q.is_zero():
        raise HypothesisViolation("maximum principle check needs q = 0")
    first = solution.frames[0]
    low, high = float(first.min()), float(first.max())
    slack = 1e-12 * max(1.0, abs(high))
    below = solution.frames - low
    above = high - solution.frames
    margins = np.minimum(below, above)
    k, i = np.unravel_index(int(np.argmin(margins)), margins.shape)
    worst = float(margins[k, i])
    return EstimateReport(
        check="maximum_principle",
        case=solution.space.label,
        constant_name="range",
        constant=high - low,
        worst_margin=worst,
        worst_point={"r": float(solution.grid.nodes[i]), "t": float(solution.times[k])},
        passed=bool(worst >= -slack),
        tolerances={"slack": slack},
    )
