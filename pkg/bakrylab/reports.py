"""Report types and their on-disk formats (JSON reports, CSV snapshots, run summaries)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
from jinja2 import Environment, FileSystemLoader

from .constants import FIELD_CSV_HEADER, FLOAT_FORMAT, SCALAR_CONSTANTS, SUMMARY_COLUMNS, TEMPLATES_DIR
from .errors import ShapeError

if TYPE_CHECKING:
    from .solver import SpaceTimeSolution


@dataclass
class EstimateReport:
    """Outcome of one checked inequality: the worst margin and where it occurs."""

    check: str
    case: str
    constant_name: str
    constant: Optional[float]
    worst_margin: float
    worst_point: Dict[str, float]
    passed: bool
    tolerances: Dict[str, float] = field(default_factory=dict)
    grid: Dict[str, float] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def scalar_name(self) -> str:
        return self.constant_name if self.constant_name in SCALAR_CONSTANTS else "worst_margin"

    @property
    def scalar(self) -> float:
        return self.constant if self.constant_name in SCALAR_CONSTANTS else self.worst_margin

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check": self.check,
            "case": self.case,
            self.constant_name: self.constant,
            "worst_margin": self.worst_margin,
            "worst_point": dict(self.worst_point),
            "pass": self.passed,
            "tolerances": dict(self.tolerances),
            "grid": dict(self.grid),
            "details": dict(self.extra),
        }


def _clean(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(value, Mapping):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def dumps(payload: Mapping[str, Any]) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload))
    return path


def write_field_csv(path: Path, nodes: np.ndarray, values: np.ndarray) -> Path:
    """Write a field snapshot as `r,value` rows."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.shape != values.shape:
        raise ShapeError(f"snapshot has {values.size} values for {nodes.size} nodes")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(FIELD_CSV_HEADER)
        for r, v in zip(nodes, values):
            writer.writerow([FLOAT_FORMAT % r, FLOAT_FORMAT % v])
    return path


def write_rows(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a CSV table; floats use the shared snapshot precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([FLOAT_FORMAT % x if isinstance(x, float) else x for x in row])
    return path


def write_summary_csv(path: Path, reports: Sequence[Any]) -> Path:
    """One row per check: (check, scalar_name, scalar, pass)."""
    rows = [(r.check, r.scalar_name, float(r.scalar), str(bool(r.passed)).lower()) for r in reports]
    return write_rows(path, SUMMARY_COLUMNS, rows)


def write_solution_archive(directory: Path, solution: "SpaceTimeSolution",
                           diagnostics: Optional[Mapping[str, Any]] = None, stride: int = 1) -> Path:
    """CSV snapshots of every `stride`-th frame (and the last) plus a JSON manifest of the run."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes = solution.problem.grid.nodes
    frames = []
    last = solution.times.size - 1
    for k in sorted(set(range(0, last + 1, max(stride, 1))) | {last}):
        t, frame = solution.times[k], solution.frames[k]
        name = f"frame_{k:05d}.csv"
        write_field_csv(directory / name, nodes, frame)
        frames.append({"index": k, "time": float(t), "file": name})

    manifest = {
        "problem": solution.problem.describe(),
        "times": [float(t) for t in solution.times],
        "frames": frames,
        "dt_history": [float(dt) for dt in solution.dt_history],
        "diagnostics": dict(diagnostics or {}),
    }
    write_json(directory / "manifest.json", manifest)
    return directory


@lru_cache(maxsize=1)
def _get_template_env() -> Environment:
    """Get cached Jinja2 template environment."""
    if not TEMPLATES_DIR.exists():
        raise FileNotFoundError(f"Template directory not found: {TEMPLATES_DIR}")
    return Environment(
        loader=FileSystemLoader(str(TEMPLATES_DIR)),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


def render_summary(path: Path, context: Dict[str, Any], template_name: str = "summary.md.j2") -> Path:
    """Render the Markdown run summary."""
    template = _get_template_env().get_template(template_name)
    content = template.render(**_clean(context))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)
    return path


def report_rows(reports: Sequence[Any]) -> List[Dict[str, Any]]:
    """Flatten reports for templates and console tables."""
    return [
        {
            "check": r.check,
            "scalar_name": r.scalar_name,
            "scalar": float(r.scalar),
            "scalar_text": "%.6g" % float(r.scalar),
            "passed": bool(r.passed),
        }
        for r in reports
    ]
