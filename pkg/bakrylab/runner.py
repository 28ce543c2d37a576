"""Experiment runner: solve once, run the requested checks in order, write every report."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.progress import Progress, SpinnerColumn, TextColumn

from .config_manager import ExperimentConfig
from .constants import (
    APP_VERSION,
    CHECK_ORDER,
    EXIT_CHECK_FAILED,
    EXIT_OK,
    SOLUTION_CHECKS,
    SWEEP_COLUMNS,
)
from .discretization import sample
from .errors import BakryLabError, CheckError
from .estimates import (
    CylinderStats,
    EstimateCase,
    build_cutoff,
    cylinder_stats,
    fit_constant,
    fit_harnack_constant,
    harnack_check,
    theorem11_report,
)
from .geometry import comparison_check
from .reports import (
    EstimateReport,
    render_summary,
    report_rows,
    write_json,
    write_rows,
    write_solution_archive,
    write_summary_csv,
)
from .solver import SpaceTimeSolution, pde_residual, solve
from .ui import checks_table, console, print_error, print_info, print_success, print_warning
from .utils import attach_run_log, detach_run_log, ensure_directory, worker_count
from .verification import (
    bochner_residual,
    liouville_decay_sweep,
    lemma21_gap,
    maximum_principle_check,
    ode_ancient_check,
)

logger = logging.getLogger(__name__)

# Config field blamed when a check raises
CHECK_FIELDS = {
    "comparison": "estimate.R",
    "bochner": "grid",
    "ode": "ode",
    "lemma21": "estimate",
    "theorem11": "estimate",
    "harnack": "estimate.harnack_times",
    "liouville_sweep": "estimate.R_list",
}

BOCHNER_ORDER_RANGE = (1.8, 2.2)
BOCHNER_EXACT_TOL = 1e-10
ARCHIVE_FRAMES = 50


@dataclass
class RunResult:
    directory: Path
    reports: List[EstimateReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED


def failure_report(error: CheckError) -> EstimateReport:
    point = getattr(error.cause, "point", None) or {}
    return EstimateReport(
        check=error.check,
        case="error",
        constant_name="error",
        constant=None,
        worst_margin=float("nan"),
        worst_point=dict(point),
        passed=False,
        extra={"error": type(error.cause).__name__, "message": str(error.cause), "field": error.field},
    )


class ExperimentRunner:
    """Run the checks of one experiment config."""

    def __init__(self, config: ExperimentConfig, quiet: bool = False):
        self.config = config
        self.quiet = quiet
        self.problem = config.build_problem()
        self._solution: Optional[SpaceTimeSolution] = None
        self._stats: Optional[CylinderStats] = None

    @property
    def directory(self) -> Path:
        return self.config.output_dir / self.config.content_hash()

    @property
    def solution(self) -> SpaceTimeSolution:
        if self._solution is None:
            logger.info("Solving on %s, %d nodes, %d steps", self.problem.space.label,
                        self.problem.grid.n, math.ceil(self.problem.T / self.problem.dt - 1e-9))
            self._solution = solve(self.problem)
        return self._solution

    @property
    def stats(self) -> CylinderStats:
        if self._stats is None:
            estimate = self.config.data["estimate"]
            self._stats = cylinder_stats(self.solution, float(estimate["R"]), estimate.get("D_override"))
        return self._stats

    def check_comparison(self) -> EstimateReport:
        return comparison_check(self.problem.space, float(self.config.data["estimate"]["R"]))

    def check_bochner(self) -> EstimateReport:
        """cos r on the run grid and its refinement; second-order decay of the residual passes."""
        space = self.problem.space
        coarse_grid = self.problem.grid
        fine_grid = coarse_grid.refine()
        coarse = bochner_residual(space, coarse_grid, sample(coarse_grid, np.cos))
        fine = bochner_residual(space, fine_grid, sample(fine_grid, np.cos))
        order = math.log2(coarse / fine) if fine > 0 and coarse > 0 else float("inf")
        low, high = BOCHNER_ORDER_RANGE
        passed = coarse <= BOCHNER_EXACT_TOL or low <= order <= high
        return EstimateReport(
            check="bochner",
            case=space.label,
            constant_name="residual",
            constant=coarse,
            worst_margin=min(order - low, high - order) if math.isfinite(order) else 0.0,
            worst_point={},
            passed=bool(passed),
            tolerances={"order_low": low, "order_high": high, "exact": BOCHNER_EXACT_TOL},
            grid={"n": coarse_grid.n, "n_refined": fine_grid.n},
            extra={"residual_refined": fine, "order": order},
        )

    def check_ode(self) -> EstimateReport:
        ode = self.config.data["ode"]
        return ode_ancient_check(float(ode["q_tilde"]), float(ode["alpha"]), float(ode["u0"]),
                                 tuple(float(t) for t in ode["t_span"]))

    def check_lemma21(self) -> EstimateReport:
        case = EstimateCase.for_alpha(self.problem.alpha).value
        grid = {"n": self.problem.grid.n, "dt": self.problem.dt}
        return lemma21_gap(self.solution, self.stats).to_report(case, grid)

    def check_theorem11(self) -> EstimateReport:
        report = theorem11_report(self.solution, self.stats)
        estimate = self.config.data["estimate"]
        R = float(estimate["R"])
        if R >= 2:
            cutoff = build_cutoff(R, self.problem.T, self.problem.t0, self.problem.t0, float(estimate["cutoff_a"]))
            report.extra["cutoff"] = {"power": cutoff.power, **cutoff.measure_constants()}
        return report

    def harnack_times(self) -> List[float]:
        times = self.solution.times
        last = times.size - 1
        indices = sorted({max(1, int(round(frac * last))) for frac in self.config.data["estimate"]["harnack_times"]})
        return [float(times[k]) for k in indices]

    def check_harnack(self) -> EstimateReport:
        solution, stats = self.solution, self.stats
        harnack = fit_harnack_constant(solution, stats)
        gradient = fit_constant(solution, stats)
        times = self.harnack_times()
        per_time = [harnack_check(solution, stats, harnack.C_fit, t) for t in times]
        worst = min(per_time, key=lambda r: r.worst_margin)
        with_gradient_constant = [harnack_check(solution, stats, gradient.C_fit, t).passed for t in times]
        weakened = [harnack_check(solution, stats, harnack.C_fit / 100, t).passed for t in times]
        return EstimateReport(
            check="harnack",
            case=worst.case,
            constant_name="C_harnack",
            constant=harnack.C_fit,
            worst_margin=worst.worst_margin,
            worst_point=worst.worst_point,
            passed=all(r.passed for r in per_time),
            tolerances=worst.tolerances,
            grid=worst.grid,
            extra={
                "times": times,
                "margins": [r.worst_margin for r in per_time],
                "fit_point": harnack.worst_point,
                "C_fit": gradient.C_fit,
                "C_fit_suffices": all(with_gradient_constant),
                "fails_at_hundredth": not all(weakened),
            },
        )

    def check_liouville_sweep(self) -> EstimateReport:
        R_list = [float(R) for R in self.config.data["estimate"]["R_list"]]
        table = liouville_decay_sweep(self.problem, R_list, self.solution)
        return table.to_report(self.problem.space.label)

    def _run_check(self, name: str) -> EstimateReport:
        handler: Callable[[], EstimateReport] = getattr(self, f"check_{name}")
        try:
            return handler()
        except BakryLabError as e:
            error = CheckError(name, CHECK_FIELDS[name], e)
            logger.error("%s", error)
            return failure_report(error)

    def diagnostics(self) -> Dict[str, Any]:
        solution = self.solution
        values: Dict[str, Any] = {"dt_halvings": int(sum(1 for dt in solution.dt_history if dt < self.problem.dt))}
        if solution.times.size >= 3:
            values["pde_residual"] = pde_residual(solution)
        if self.problem.q.is_zero():
            values["maximum_principle"] = maximum_principle_check(solution).to_dict()
        return values

    def run(self) -> RunResult:
        directory = ensure_directory(self.directory)
        log_handler = attach_run_log(directory)
        try:
            logger.info("bakrylab %s, config %s", APP_VERSION, self.config.content_hash())
            result = RunResult(directory)
            checks = self.config.checks
            with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                          console=console, transient=True, disable=self.quiet) as progress:
                task = progress.add_task("Running checks...", total=len(checks))
                for name in checks:
                    progress.update(task, description=f"Running {name}...")
                    report = self._run_check(name)
                    write_json(directory / f"{name}.json", report.to_dict())
                    result.reports.append(report)
                    progress.advance(task)

            write_summary_csv(directory / "summary.csv", result.reports)
            self.config.save(directory / "config.yaml")
            context = {
                "version": APP_VERSION,
                "config_hash": self.config.content_hash(),
                "problem": self.problem.describe(),
                "checks": report_rows(result.reports),
                "reports": [r.to_dict() for r in result.reports],
                "passed": result.passed,
                "diagnostics": {},
            }
            if self._solution is not None or any(name in SOLUTION_CHECKS for name in checks):
                try:
                    diagnostics = self.diagnostics()
                    stride = max(1, self.solution.times.size // ARCHIVE_FRAMES)
                    write_solution_archive(directory / "solution", self.solution, diagnostics, stride)
                    context["diagnostics"] = diagnostics
                except BakryLabError as e:
                    logger.error("Solution archive skipped: %s", e)
                    if not self.quiet:
                        print_warning(f"Solution archive skipped: {e}")
            render_summary(directory / "summary.md", context)

            if not self.quiet:
                console.print(checks_table(report_rows(result.reports), title=f"Run {self.config.content_hash()}"))
                if result.passed:
                    print_success(f"All checks passed; reports in {directory}")
                else:
                    print_error(f"Some checks failed; reports in {directory}")
            return result
        finally:
            detach_run_log(log_handler)


@dataclass
class SweepResult:
    path: Path
    rows: List[Tuple[float, str, float, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row[3] for row in self.rows)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CHECK_FAILED


def _sweep_point(data: Dict[str, Any], source: Optional[str], parameter: str,
                 value: float) -> List[Tuple[float, str, float, bool]]:
    config = ExperimentConfig(data, Path(source) if source else None).with_value(parameter, value)
    result = ExperimentRunner(config, quiet=True).run()
    return [(float(value), r.check, float(r.scalar), bool(r.passed)) for r in result.reports]


def sweep(config: ExperimentConfig, parameter: str, values: Sequence[float],
          workers: Optional[int] = None, output: Optional[Path] = None) -> SweepResult:
    """Run the config once per value of a numeric field and aggregate the check scalars."""
    config.get(parameter)
    for value in values:
        config.with_value(parameter, value)

    count = worker_count(workers, len(values))
    logger.info("Sweep over %s with %d values on %d workers", parameter, len(values), count)
    source = str(config.source) if config.source else None
    rows: List[Tuple[float, str, float, bool]] = []
    if count > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=count) as pool:
            futures = [pool.submit(_sweep_point, config.data, source, parameter, v) for v in values]
            for future in futures:
                rows.extend(future.result())
    else:
        for value in values:
            rows.extend(_sweep_point(config.data, source, parameter, value))

    rows.sort(key=lambda row: (row[0], CHECK_ORDER.index(row[1])))
    if output is None:
        output = config.output_dir / f"sweep_{config.content_hash()}_{parameter.replace('.', '_')}.csv"
    write_rows(output, SWEEP_COLUMNS, [(v, check, scalar, str(passed).lower()) for v, check, scalar, passed in rows])
    print_info(f"Sweep table written to {output}")
    result = SweepResult(output, rows)
    if not result.passed:
        print_error("Some sweep points failed their checks")
    return result
