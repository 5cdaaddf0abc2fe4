# constants.py

"""
Defaults and tunables for the local zeta continuation engine.
"""

import os
from fractions import Fraction

# Directories
LOG_DIR = "log"
LOG_FILE = os.path.join(LOG_DIR, "zeta.log")
OUTPUT_DIR = "output"
PROBLEMS_DIR = "problems"

LOGGER_NAME = "ZetaEngine"
CONSOLE_LOG_LEVEL = "WARNING"

# Cutoff defaults
DEFAULT_C0 = Fraction(1, 2)
DEFAULT_C1 = Fraction(1)
DEFAULT_ETA = Fraction(1)
DEFAULT_WINDOW = (Fraction(-1), Fraction(1))

# Run defaults
DEFAULT_DEPTH = 3
DEFAULT_BRANCH = "upper"
DEFAULT_TOL = 1e-8
BRANCHES = ("upper", "lower")

# Certification
CERTIFY_DEPTH = 12
ETA_HALVINGS = 20
DELTA_HALVINGS = 20
ROOT_PRECISION = Fraction(1, 10**40)

# Continuation
TERM_BUDGET = 100_000

# Evaluation
EXCLUSION_RADIUS = 1e-6
CONTOUR_NODES = 64
CONTOUR_MAX_NODES = 1024
CONTOUR_AGREEMENT = 1e-8
RESIDUE_FLOOR = 1e-9
RESIDUE_TOL = 1e-11

# Quadrature
GL_ORDER = 8
GRADING_RATIO = 0.25
FACE_TAIL = 1e-12
UNIFORM_CELLS = 4
MAX_LEVEL = 4
ABS_FLOOR = 1e-14
# Errors below this share of the sum of |integrand * weight| are at roundoff level
SCALE_FLOOR = 1e-12

# Verification grid: Re z in (0.25, 2], Im z in {-1, 0, 1}
VERIFY_RE = (0.6, 0.95, 1.3, 1.65, 2.0)
VERIFY_IM = (-1.0, 0.0, 1.0)
VERIFY_TOL = 1e-6

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CERTIFICATION = 2
EXIT_RESOURCE = 3
