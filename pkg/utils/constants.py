"""
Constants shared across the rod homogenization toolkit.

This module centralizes tolerances, solver defaults, regime and boundary-condition
names, and output formatting constants used across multiple modules.
"""

import math

# ============================================================================
# Voigt Basis
# ============================================================================
SQRT2 = math.sqrt(2.0)
VOIGT_SIZE = 6

# ============================================================================
# Geometric Tolerances
# ============================================================================
DEGENERATE_AREA_FACTOR = 1e-14
NORMALIZATION_TOL = 1e-10
PRINCIPAL_AXES_TIE_TOL = 1e-12
POINT_LOCATION_TOL = 1e-12

# ============================================================================
# Material Tolerances
# ============================================================================
SYMMETRY_TOL = 1e-12

# ============================================================================
# Microstructure
# ============================================================================
RATIONALITY_TOL = 1e-12
MAX_RATIONAL_DENOMINATOR = 10_000
RENEWAL_BLOCK_SIZE = 1024
QUASIPERIODIC_SCAN_STEPS_PER_PERIOD = 64
MAX_SEED = 2**64 - 1

# ============================================================================
# Linear Solver Defaults
# ============================================================================
SOLVER_RTOL = 1e-10
SOLVER_MAX_ITERATIONS = 100_000
SOLVER_PCG = "pcg"
SOLVER_DIRECT = "direct"

# ============================================================================
# Regime Names
# ============================================================================
REGIME_GAMMA_ZERO = "gamma_zero"
REGIME_GAMMA_FINITE = "gamma_finite"
REGIME_GAMMA_INFINITE = "gamma_infinite"

# ============================================================================
# Axial Discretization
# ============================================================================
AXIAL_FOURIER = "fourier"
AXIAL_P1 = "p1"
GAUSS_OFFSET = 1.0 / math.sqrt(3.0)
CELL_COVER_TOL = 1e-9

# ============================================================================
# Rod Boundary Conditions
# ============================================================================
BC_CLAMPED_LEFT = "clamped_left"
BC_SLIDING_RIGHT = "sliding_right"
DEFAULT_ROD_NODES = 1001
GALERKIN_MAX_CONDITION = 1e12
GALERKIN_QUADRATURE_POINTS = 128

# ============================================================================
# Output Formatting
# ============================================================================
CSV_FLOAT_FORMAT = "%.17g"
ROD_CSV_COLUMNS = ("x1", "u", "v2", "v3", "w", "wp", "v2pp", "v3pp", "E11t", "E11h", "Mt")
SWEEP_CSV_COLUMNS = ("h", "epsilon", "energy", "abs_error")
BIRKHOFF_CSV_COLUMNS = ("T", "average", "abs_error")

# ============================================================================
# CLI Exit Codes
# ============================================================================
EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONFIG_ERROR = 2
