"""Experiment configuration: loading, validation and construction of the numerical objects."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from .constants import (
    CHECK_ORDER,
    DEFAULTS_FILE,
    INITIAL_KINDS,
    MIN_DIMENSION,
    MIN_GRID_NODES,
    OUTPUT_ENV_VAR,
    SOURCE_KINDS,
    SPACE_KINDS,
)
from .discretization import RadialGrid
from .errors import BakryLabError, ConfigError
from .geometry import ModelSpace
from .solver import ConstantSource, GaussianBump, PDEProblem, SeparableSource, Source, TabulatedSource

logger = logging.getLogger(__name__)

DEFAULT_CONFIG: Dict[str, Any] = {
    "space": {"kind": "euclidean", "dimension": 3, "K": 1.0, "lambda": 0.5,
              "warp_table": None, "weight_lambda": 0.0},
    "grid": {"r_max": 8.0, "n": 129},
    "time": {"t0": 1.5, "T": 0.5, "dt": 1e-3, "theta": 1.0},
    "pde": {"alpha": 1.0, "reaction": "euler",
            "q": {"kind": "constant", "value": 0.0, "amplitude": 1.0, "center": 0.0, "width": 1.0,
                  "temporal": "constant", "rate": 0.0, "path": None}},
    "initial": {"kind": "gaussian", "value": 1.0, "amplitude": (4 * math.pi) ** -1.5, "width": 4.0},
    "estimate": {"R": 2.0, "D_override": None, "cutoff_a": 0.75,
                 "R_list": [2.0, 4.0, 8.0, 16.0], "harnack_times": [0.25, 0.5, 1.0]},
    "ode": {"q_tilde": -1.0, "alpha": 2.0, "u0": 1.0, "t_span": [0.0, 3.0]},
    "checks": ["comparison", "theorem11"],
    "output_dir": "results",
    "seed": None,
}


def load_defaults() -> Dict[str, Any]:
    """Load the shipped defaults, falling back to the built-in copy."""
    if DEFAULTS_FILE.exists():
        try:
            with open(DEFAULTS_FILE, "r") as f:
                data = yaml.safe_load(f)
            if isinstance(data, dict):
                return data
        except yaml.YAMLError as e:
            logger.warning("Invalid YAML in %s: %s; using built-in defaults", DEFAULTS_FILE, e)
    return copy.deepcopy(DEFAULT_CONFIG)


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value!r}")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _choice(value: Any, choices, path: str) -> str:
    if value not in choices:
        raise ConfigError(path, f"must be one of {', '.join(choices)}, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    """A validated experiment description addressed by dotted paths."""

    data: Dict[str, Any]
    source: Optional[Path] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: Optional[Path] = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
        config = cls(deep_merge(load_defaults(), data), source)
        config.validate()
        return config

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError("<file>", f"cannot read {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError("<file>", f"invalid YAML in {path}: {e}") from e
        return cls.from_dict(data, path)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self.data, f, default_flow_style=False, sort_keys=False)
        return path

    def get(self, dotted: str) -> Any:
        node: Any = self.data
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(dotted, "no such field")
            node = node[part]
        return node

    def with_value(self, dotted: str, value: Any) -> "ExperimentConfig":
        """Copy of the config with one numeric leaf replaced."""
        current = self.get(dotted)
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise ConfigError(dotted, f"sweeps need a numeric field, found {current!r}")
        if isinstance(current, int) and float(value).is_integer():
            value = int(value)
        data = copy.deepcopy(self.data)
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value
        config = ExperimentConfig(data, self.source)
        config.validate()
        return config

    @property
    def checks(self) -> List[str]:
        requested = set(self.data["checks"])
        return [name for name in CHECK_ORDER if name in requested]

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV_VAR) or self.data["output_dir"])

    def content_hash(self) -> str:
        """Short digest of the configuration content (output_dir excluded)."""
        payload = {k: v for k, v in self.data.items() if k != "output_dir"}
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def validate(self) -> None:
        d = self.data
        space = d["space"]
        kind = _choice(space.get("kind"), SPACE_KINDS, "space.kind")
        if _integer(space.get("dimension"), "space.dimension") < MIN_DIMENSION:
            raise ConfigError("space.dimension", f"must be >= {MIN_DIMENSION}")
        if kind == "hyperbolic" and _number(space.get("K"), "space.K") <= 0:
            raise ConfigError("space.K", "must be positive")
        if kind == "gaussian_soliton":
            _number(space.get("lambda"), "space.lambda")
        if kind == "custom":
            if not space.get("warp_table"):
                raise ConfigError("space.warp_table", "custom spaces need a warp table path")
            _number(space.get("weight_lambda"), "space.weight_lambda")

        r_max = _number(d["grid"].get("r_max"), "grid.r_max")
        if r_max <= 0:
            raise ConfigError("grid.r_max", "must be positive")
        if _integer(d["grid"].get("n"), "grid.n") < MIN_GRID_NODES:
            raise ConfigError("grid.n", f"must be >= {MIN_GRID_NODES}")

        time = d["time"]
        _number(time.get("t0"), "time.t0")
        T = _number(time.get("T"), "time.T")
        if T <= 0:
            raise ConfigError("time.T", "must be positive")
        dt = _number(time.get("dt"), "time.dt")
        if not 0 < dt <= T:
            raise ConfigError("time.dt", f"must lie in (0, T = {T}]")
        if not 0.5 <= _number(time.get("theta"), "time.theta") <= 1.0:
            raise ConfigError("time.theta", "must lie in [0.5, 1]")

        pde = d["pde"]
        _number(pde.get("alpha"), "pde.alpha")
        _choice(pde.get("reaction"), ("euler", "exact"), "pde.reaction")
        q = pde["q"]
        q_kind = _choice(q.get("kind"), SOURCE_KINDS, "pde.q.kind")
        if q_kind == "constant":
            _number(q.get("value"), "pde.q.value")
        elif q_kind in ("gaussian_bump", "separable"):
            for key in ("amplitude", "center", "width"):
                _number(q.get(key), f"pde.q.{key}")
            if q["width"] <= 0:
                raise ConfigError("pde.q.width", "must be positive")
            if q_kind == "separable":
                _choice(q.get("temporal"), ("constant", "exponential", "linear"), "pde.q.temporal")
                _number(q.get("rate"), "pde.q.rate")
        elif not q.get("path"):
            raise ConfigError("pde.q.path", "tabulated sources need a CSV path")

        initial = d["initial"]
        i_kind = _choice(initial.get("kind"), INITIAL_KINDS, "initial.kind")
        if i_kind in ("constant", "bump_plus_constant") and _number(initial.get("value"), "initial.value") <= 0:
            raise ConfigError("initial.value", "must be positive")
        if i_kind in ("gaussian", "bump_plus_constant"):
            amplitude = _number(initial.get("amplitude"), "initial.amplitude")
            if _number(initial.get("width"), "initial.width") <= 0:
                raise ConfigError("initial.width", "must be positive")
            if i_kind == "gaussian" and amplitude <= 0:
                raise ConfigError("initial.amplitude", "must be positive")
            if i_kind == "bump_plus_constant" and amplitude < 0:
                raise ConfigError("initial.amplitude", "must be nonnegative")

        estimate = d["estimate"]
        R = _number(estimate.get("R"), "estimate.R")
        if not 0 < R <= r_max / 2:
            raise ConfigError("estimate.R", f"must lie in (0, r_max/2 = {r_max / 2}]")
        if estimate.get("D_override") is not None and _number(estimate["D_override"], "estimate.D_override") <= 0:
            raise ConfigError("estimate.D_override", "must be positive")
        if not 0 < _number(estimate.get("cutoff_a"), "estimate.cutoff_a") < 1:
            raise ConfigError("estimate.cutoff_a", "must lie in (0, 1)")
        for i, value in enumerate(estimate.get("harnack_times") or []):
            if not 0 < _number(value, f"estimate.harnack_times.{i}") <= 1:
                raise ConfigError(f"estimate.harnack_times.{i}", "fractions of T must lie in (0, 1]")

        checks = d.get("checks")
        if not isinstance(checks, list):
            raise ConfigError("checks", "must be a list")
        for i, name in enumerate(checks):
            _choice(name, CHECK_ORDER, f"checks.{i}")

        if "liouville_sweep" in checks:
            R_list = [_number(v, f"estimate.R_list.{i}") for i, v in enumerate(estimate.get("R_list") or [])]
            if len(R_list) < 2 or min(R_list) <= 0:
                raise ConfigError("estimate.R_list", "needs at least two positive radii")
            if max(R_list) > r_max / 2:
                raise ConfigError("estimate.R_list", f"radii must not exceed r_max/2 = {r_max / 2}")
        if "ode" in checks:
            ode = d["ode"]
            _number(ode.get("q_tilde"), "ode.q_tilde")
            _number(ode.get("alpha"), "ode.alpha")
            if _number(ode.get("u0"), "ode.u0") <= 0:
                raise ConfigError("ode.u0", "must be positive")
            span = ode.get("t_span")
            if not isinstance(span, list) or len(span) != 2:
                raise ConfigError("ode.t_span", "must be a list of two times")
            for i, value in enumerate(span):
                _number(value, f"ode.t_span.{i}")

        seed = d.get("seed")
        if seed is not None:
            _integer(seed, "seed")

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        if not path.is_absolute() and self.source is not None:
            path = self.source.parent / path
        return path

    def build_space(self) -> ModelSpace:
        space = self.data["space"]
        kind, N = space["kind"], space["dimension"]
        try:
            if kind == "euclidean":
                return ModelSpace.euclidean(N)
            if kind == "hyperbolic":
                return ModelSpace.hyperbolic(N, float(space["K"]))
            if kind == "gaussian_soliton":
                return ModelSpace.gaussian_soliton(N, float(space["lambda"]))
            return ModelSpace.from_warp_table(N, self._resolve(space["warp_table"]),
                                              float(space.get("weight_lambda") or 0.0))
        except BakryLabError as e:
            raise ConfigError("space", str(e)) from e

    def build_grid(self) -> RadialGrid:
        return RadialGrid(float(self.data["grid"]["r_max"]), int(self.data["grid"]["n"]))

    def build_source(self) -> Source:
        q = self.data["pde"]["q"]
        kind = q["kind"]
        if kind == "constant":
            return ConstantSource(float(q["value"]))
        if kind == "gaussian_bump":
            return GaussianBump(float(q["amplitude"]), float(q["center"]), float(q["width"]))
        if kind == "separable":
            return SeparableSource.bump_in_time(float(q["amplitude"]), float(q["center"]), float(q["width"]),
                                                temporal=q["temporal"], rate=float(q["rate"]))
        try:
            return TabulatedSource.from_csv(self._resolve(q["path"]))
        except (OSError, BakryLabError) as e:
            raise ConfigError("pde.q.path", str(e)) from e

    def build_initial(self, grid: RadialGrid) -> np.ndarray:
        initial = self.data["initial"]
        r = grid.nodes
        kind = initial["kind"]
        if kind == "constant":
            return np.full(grid.n, float(initial["value"]))
        bump = float(initial["amplitude"]) * np.exp(-r ** 2 / float(initial["width"]))
        if kind == "gaussian":
            return bump
        return float(initial["value"]) + bump

    def build_problem(self) -> PDEProblem:
        grid = self.build_grid()
        time = self.data["time"]
        pde = self.data["pde"]
        try:
            return PDEProblem(
                space=self.build_space(),
                grid=grid,
                alpha=float(pde["alpha"]),
                q=self.build_source(),
                u0=self.build_initial(grid),
                t0=float(time["t0"]),
                T=float(time["T"]),
                dt=float(time["dt"]),
                theta=float(time["theta"]),
                reaction=pde["reaction"],
            )
        except ConfigError:
            raise
        except BakryLabError as e:
            raise ConfigError("pde", str(e)) from e
