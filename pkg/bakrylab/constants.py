"""Constants used throughout bakrylab."""

from pathlib import Path


def get_app_version():
    """Get application version from VERSION file."""
    possible_paths = [
        Path(__file__).parent.parent / "VERSION",  # Development
        Path(__file__).parent / "VERSION",  # Installed with package data
    ]

    for version_path in possible_paths:
        if version_path.exists():
            return version_path.read_text().strip()

    return "unknown"


# Version
APP_VERSION = get_app_version()

# Data directories
DATA_DIR = Path(__file__).parent.parent / "data"
TEMPLATES_DIR = DATA_DIR / "templates"
CONFIGS_DIR = DATA_DIR / "configs"
DEFAULTS_FILE = CONFIGS_DIR / "defaults.yaml"

# Environment
OUTPUT_ENV_VAR = "BAKRYLAB_OUT"

# File formats
WARP_TABLE_HEADER = "# warp-table v1"
FIELD_CSV_HEADER = ("r", "value")
FLOAT_FORMAT = "%.15g"

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

# Space kinds
SPACE_KINDS = ("euclidean", "hyperbolic", "gaussian_soliton", "custom")

# Source kinds for q(r, t)
SOURCE_KINDS = ("constant", "gaussian_bump", "separable", "tabulated")

# Initial data kinds
INITIAL_KINDS = ("constant", "gaussian", "bump_plus_constant")

# Checks, in the order the runner executes them
CHECK_ORDER = (
    "comparison",
    "bochner",
    "ode",
    "lemma21",
    "theorem11",
    "harnack",
    "liouville_sweep",
)
SOLUTION_CHECKS = ("lemma21", "theorem11", "harnack")

# Geometry
MIN_DIMENSION = 2
RICCI_SAMPLES = 10_000
RICCI_REFINE_TOL = 1e-6
RICCI_MAX_REFINEMENTS = 6
COMPARISON_TOL = 1e-12
POLE_TOL = 1e-12
POLE_SLOPE_TOL = 1e-8

# Discretization
MIN_GRID_NODES = 8
GAUSS_POINTS = 6

# Solver
DEFAULT_DT = 1e-3
MAX_DT_HALVINGS = 10
DEFAULT_THETA = 1.0

# Estimates
DEFAULT_D_FACTOR = 1.05
DEFAULT_CUTOFF_EXPONENT = 0.75
MEASURED_CUTOFF_EXPONENTS = (0.5, 0.75)
CUTOFF_SAMPLES = 512
HARNACK_TOL = 1e-8

# Verification
LEMMA21_SLACK = 10.0
ODE_RTOL = 1e-11
ODE_ATOL = 1e-13
ODE_TOL = 1e-8
LIOUVILLE_EXPONENT_RANGE = (-0.6, -0.4)
DEFAULT_R_LIST = (2.0, 4.0, 8.0, 16.0)

# Sweep output
SWEEP_COLUMNS = ("parameter_value", "check", "scalar", "pass")
SUMMARY_COLUMNS = ("check", "scalar_name", "scalar", "pass")
SCALAR_CONSTANTS = ("C_fit", "min_gap")
