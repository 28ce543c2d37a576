"""Rotationally symmetric smooth metric measure spaces and their curvature."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .constants import (
    COMPARISON_TOL,
    MIN_DIMENSION,
    POLE_SLOPE_TOL,
    POLE_TOL,
    RICCI_MAX_REFINEMENTS,
    RICCI_REFINE_TOL,
    RICCI_SAMPLES,
    WARP_TABLE_HEADER,
)
from .errors import DomainError, InvalidSpaceError, WarpTableError
from .reports import EstimateReport

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Smallest radius sampled by every curvature sweep, shared across ball sizes.
POLE_SAMPLE = 1e-6


def _zero(r: np.ndarray) -> np.ndarray:
    return np.zeros_like(r)


def _one(r: np.ndarray) -> np.ndarray:
    return np.ones_like(r)


@dataclass(frozen=True)
class Profile:
    """A radial profile p(r) together with p'(r) and p''(r)."""

    value: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.value(r)

    @classmethod
    def zero(cls) -> "Profile":
        return cls(_zero, _zero, _zero)


@dataclass(frozen=True)
class ModelSpace:
    """Warped product dr^2 + phi(r)^2 g_sphere with radial weight f(r).

    Instances are immutable; every operation on them is a pure function.
    """

    dimension: int
    warp: Profile
    weight: Profile
    kind: str = "custom"
    params: Dict[str, float] = field(default_factory=dict, compare=False)
    extent: float = math.inf

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < MIN_DIMENSION:
            raise InvalidSpaceError(f"dimension must be an integer >= {MIN_DIMENSION}, got {self.dimension}")
        pole = np.zeros(1)
        phi0 = float(self.warp.value(pole)[0])
        dphi0 = float(self.warp.d1(pole)[0])
        df0 = float(self.weight.d1(pole)[0])
        if abs(phi0) > POLE_TOL:
            raise InvalidSpaceError(f"warp must vanish at the pole, phi(0) = {phi0}")
        if abs(dphi0 - 1.0) > POLE_SLOPE_TOL:
            raise InvalidSpaceError(f"warp must have unit slope at the pole, phi'(0) = {dphi0}")
        if abs(df0) > POLE_SLOPE_TOL:
            raise InvalidSpaceError(f"weight must be flat at the pole, f'(0) = {df0}")

    @property
    def label(self) -> str:
        if not self.params:
            return f"{self.kind}(N={self.dimension})"
        inner = ", ".join(f"{key}={value:g}" for key, value in sorted(self.params.items()))
        return f"{self.kind}({inner}, N={self.dimension})"

    def density(self, r: ArrayLike) -> np.ndarray:
        """Radial weighted volume element e^{-f} phi^{N-1}."""
        r = np.asarray(r, dtype=float)
        return np.exp(-self.weight.value(r)) * self.warp.value(r) ** (self.dimension - 1)

    @classmethod
    def euclidean(cls, dimension: int) -> "ModelSpace":
        return cls(dimension, Profile(lambda r: np.asarray(r, dtype=float), _one, _zero), Profile.zero(), "euclidean")

    @classmethod
    def hyperbolic(cls, dimension: int, K: float = 1.0) -> "ModelSpace":
        if K <= 0:
            raise InvalidSpaceError(f"hyperbolic curvature scale must be positive, got K = {K}")
        s = math.sqrt(K)
        warp = Profile(
            lambda r: np.sinh(s * r) / s,
            lambda r: np.cosh(s * r),
            lambda r: s * np.sinh(s * r),
        )
        return cls(dimension, warp, Profile.zero(), "hyperbolic", {"K": K})

    @classmethod
    def gaussian_soliton(cls, dimension: int, lam: float = 0.5) -> "ModelSpace":
        weight = Profile(
            lambda r: 0.5 * lam * np.asarray(r, dtype=float) ** 2,
            lambda r: lam * np.asarray(r, dtype=float),
            lambda r: lam * np.ones_like(r),
        )
        warp = Profile(lambda r: np.asarray(r, dtype=float), _one, _zero)
        return cls(dimension, warp, weight, "gaussian_soliton", {"lambda": lam})

    @classmethod
    def custom(cls, dimension: int, warp: Profile, weight: Optional[Profile] = None,
               extent: float = math.inf, **params: float) -> "ModelSpace":
        return cls(dimension, warp, weight or Profile.zero(), "custom", dict(params), extent)

    @classmethod
    def from_warp_table(cls, dimension: int, path: Union[str, Path], weight_lambda: float = 0.0) -> "ModelSpace":
        """Load a custom space from a `# warp-table v1` file."""
        r, phi, dphi, ddphi = load_warp_table(path)
        columns = [CubicSpline(r, column, extrapolate=False) for column in (phi, dphi, ddphi)]
        warp = Profile(*(lambda x, c=c: c(np.asarray(x, dtype=float)) for c in columns))
        weight = None
        params = {}
        if weight_lambda:
            lam = weight_lambda
            weight = Profile(
                lambda x: 0.5 * lam * np.asarray(x, dtype=float) ** 2,
                lambda x: lam * np.asarray(x, dtype=float),
                lambda x: lam * np.ones_like(x),
            )
            params["weight_lambda"] = lam
        logger.debug("Loaded warp table %s with %d records", path, r.size)
        return cls.custom(dimension, warp, weight, extent=float(r[-1]), **params)


def load_warp_table(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Parse a warp table and validate its pole conditions."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise WarpTableError(f"cannot read warp table {path}: {e}") from e

    if not lines or lines[0].strip() != WARP_TABLE_HEADER:
        raise WarpTableError(f"{path}: first line must be '{WARP_TABLE_HEADER}'")

    records = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 4:
            raise WarpTableError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
        try:
            records.append([float(x) for x in fields])
        except ValueError as e:
            raise WarpTableError(f"{path}:{lineno}: {e}") from e

    if len(records) < 4:
        raise WarpTableError(f"{path}: need at least 4 records for cubic interpolation")

    table = np.array(records)
    r, phi, dphi, ddphi = table.T
    if np.any(np.diff(r) <= 0):
        raise WarpTableError(f"{path}: radii must be strictly increasing")
    if r[0] != 0.0:
        raise WarpTableError(f"{path}: table must start at the pole r = 0")
    if abs(phi[0]) > POLE_TOL or abs(dphi[0] - 1.0) > POLE_SLOPE_TOL:
        raise WarpTableError(f"{path}: pole conditions phi(0)=0, phi'(0)=1 violated")
    if np.any(phi[1:] <= 0):
        raise WarpTableError(f"{path}: warp must be positive away from the pole")
    return r, phi, dphi, ddphi


def save_warp_table(path: Union[str, Path], r, phi, dphi, ddphi) -> Path:
    """Write a warp table in the `# warp-table v1` format."""
    path = Path(path)
    rows = np.column_stack([r, phi, dphi, ddphi])
    with open(path, "w") as f:
        f.write(WARP_TABLE_HEADER + "\n")
        for row in rows:
            f.write(" ".join(f"{x:.17g}" for x in row) + "\n")
    return path


def _radius(space: ModelSpace, r: ArrayLike) -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("radius must be positive and finite (the coefficients are singular at the pole)")
    if np.any(arr > space.extent):
        raise DomainError(f"radius exceeds the extent {space.extent} of {space.label}")
    return arr


def _warp_values(space: ModelSpace, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    phi = space.warp.value(r)
    if np.any(~(phi > 0)):
        raise InvalidSpaceError(f"warp of {space.label} is not positive on the requested radii")
    return phi, space.warp.d1(r), space.warp.d2(r)


def _scalar_or_array(template: ArrayLike, value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(template) == 0 else value


def drift_coefficient(space: ModelSpace, r: ArrayLike) -> ArrayLike:
    """Weighted Laplacian of the distance function, (N-1) phi'/phi - f'."""
    x = _radius(space, r)
    phi, dphi, _ = _warp_values(space, x)
    value = (space.dimension - 1) * dphi / phi - space.weight.d1(x)
    return _scalar_or_array(r, value)


def bakry_emery_eigenvalues(space: ModelSpace, r: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    """Radial and tangential eigenvalues of Ric_f = Ric + Hess f."""
    x = _radius(space, r)
    phi, dphi, ddphi = _warp_values(space, x)
    n = space.dimension
    df = space.weight.d1(x)
    radial = -(n - 1) * ddphi / phi + space.weight.d2(x)
    tangential = -ddphi / phi + (n - 2) * (1.0 - dphi ** 2) / phi ** 2 + df * dphi / phi
    return _scalar_or_array(r, radial), _scalar_or_array(r, tangential)


def _lowest_eigenvalue(space: ModelSpace, r: np.ndarray) -> np.ndarray:
    radial, tangential = bakry_emery_eigenvalues(space, r)
    return np.minimum(radial, tangential)


def _sampled_minimum(space: ModelSpace, R: float, samples: int) -> float:
    nearest = min(POLE_SAMPLE, R)
    r = np.unique(np.concatenate([np.geomspace(nearest, R, 64), np.linspace(R / samples, R, samples)]))
    lowest = _lowest_eigenvalue(space, r)
    i = int(np.argmin(lowest))
    best = float(lowest[i])
    if 0 < i < r.size - 1:
        polished = minimize_scalar(
            lambda x: float(_lowest_eigenvalue(space, np.array([x]))[0]),
            bounds=(r[i - 1], r[i + 1]),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if polished.success:
            best = min(best, float(polished.fun))
    return best


def ricci_lower_bound(space: ModelSpace, R: float, samples: int = RICCI_SAMPLES) -> float:
    """Smallest K >= 0 with Ric_f >= -(N-1)K on B(x0, R)."""
    if not R > 0:
        raise DomainError(f"ball radius must be positive, got R = {R}")
    if space.kind in ("euclidean",):
        return 0.0
    if space.kind == "gaussian_soliton" and space.params.get("lambda", 0.0) >= 0:
        return 0.0
    if space.kind == "hyperbolic":
        return float(space.params["K"])

    current = _sampled_minimum(space, R, samples)
    for _ in range(RICCI_MAX_REFINEMENTS):
        samples *= 2
        refined = _sampled_minimum(space, R, samples)
        if abs(refined - current) <= RICCI_REFINE_TOL:
            current = min(current, refined)
            break
        current = refined
    else:
        logger.warning("Ricci lower bound for %s on R=%g did not stabilise", space.label, R)
    return max(0.0, -current / (space.dimension - 1))


def comparison_check(space: ModelSpace, R: float, samples: int = 256) -> EstimateReport:
    """Check Delta_f r <= mu + (N-1) K (R-1) on the shell 1 <= r <= R."""
    if R < 2:
        raise DomainError(f"comparison check needs R >= 2, got R = {R}")
    if samples < 2:
        raise DomainError(f"comparison check needs at least 2 samples, got {samples}")

    mu = float(drift_coefficient(space, 1.0))
    K = ricci_lower_bound(space, R)
    bound = mu + (space.dimension - 1) * K * (R - 1)
    r = np.linspace(1.0, R, samples)
    margin = bound - drift_coefficient(space, r)
    worst = int(np.argmin(margin))
    extra = {"mu": mu, "K": K, "R": float(R), "samples": samples}
    if "lambda" in space.params:
        lam = space.params["lambda"]
        extra["soliton"] = {"lambda": lam, "type": classify_soliton(lam), "defect": soliton_defect(space, R)}
    return EstimateReport(
        check="comparison",
        case=space.label,
        constant_name="bound",
        constant=bound,
        worst_margin=float(margin[worst]),
        worst_point={"r": float(r[worst])},
        passed=bool(margin[worst] >= -COMPARISON_TOL),
        tolerances={"margin": COMPARISON_TOL},
        extra=extra,
    )


def soliton_defect(space: ModelSpace, R: float, samples: int = 512) -> float:
    """Largest deviation of the Ric_f eigenvalues from the soliton constant on (0, R]."""
    if "lambda" not in space.params:
        raise InvalidSpaceError(f"{space.label} carries no soliton constant")
    lam = space.params["lambda"]
    r = np.linspace(R / samples, R, samples)
    radial, tangential = bakry_emery_eigenvalues(space, r)
    return float(max(np.max(np.abs(radial - lam)), np.max(np.abs(tangential - lam))))


def classify_soliton(lam: float) -> str:
    if lam > 0:
        return "shrinking"
    if lam < 0:
        return "expanding"
    return "steady"
