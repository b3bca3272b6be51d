"""
This module holds the environment-backed settings and the numerical defaults used across the project.
Values can be overridden through a `.env` file in the working directory or by scenario documents.
"""

import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# --- CONFIGURABLE PARAMETERS ---
# Directory where CSV series and JSON reports are written when --out is not given
OUT_DIR = os.getenv("FEEDBACK_ADIABATICS_OUT_DIR", "out")

# Logging level name (DEBUG, INFO, WARNING, ERROR)
LOG_LEVEL = os.getenv("FEEDBACK_ADIABATICS_LOG_LEVEL", "INFO")

# Optional log file; when unset only the console handler is installed
LOG_FILE = os.getenv("FEEDBACK_ADIABATICS_LOG_FILE") or None

TOOL_VERSION = "0.3.0"

# --- NUMERICAL DEFAULTS ---
# Exact (fast-time) integrator
RTOL = 1e-9
ATOL = 1e-12
MIN_STEP = 1e-10
SAMPLE_STRIDE = 0.25

# Reduced and mixed (slow-time) integrators
REDUCED_STEP = 1e-3

# Spectral checks
GAP_TOL = 1e-8
HERMITIAN_TOL = 1e-12
MATRIX_TOL = 1e-9

# Scenario validation
RESONANCE_SAMPLES = 33
EPSILON_WARNING = 0.1

# Window averaging: tau_f = WINDOW_PERIODS * epsilon * 2*pi / min_gap
WINDOW_PERIODS = 20
# -------------------------------
