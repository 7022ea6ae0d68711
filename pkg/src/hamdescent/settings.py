"""
hamdescent Global Configuration
================================
Central defaults for the solver, tolerances, and output formats.
Validated run-time configuration lives in schemas.py; these are the
values it falls back to.
"""

# --- Armijo / descent constants ---
ALPHA = 0.3          # sufficient-decrease fraction
BETA = 0.5           # step contraction factor
ETA = 0.9            # eta-minimizer fraction
L_MAX = 40           # largest Armijo exponent tried before stalling
MAX_ITERS = 100
THETA_TOL = 1e-8     # |theta| at or below this counts as converged

# --- Mixture bookkeeping ---
WEIGHT_FLOOR = 1e-9      # atoms lighter than this are pruned
WEIGHT_FLOOR_MAX = 0.01
WEIGHT_SUM_TOL = 1e-12
MERGE_TOL = 1e-12        # pointwise distance under which two atoms merge

# --- Switched-system mixtures ---
EMBED_SLOTS = 24         # equal-weight atoms a reduced hybrid-lqr mixture is rebuilt from
EMBED_ZERO_TOL = 1e-12   # |mode integral| at or below this counts as an idle mode

# --- Feasibility / numerical tolerances ---
HULL_TOL = 1e-9
THETA_CLAMP_TOL = 1e-12
GRID_REL_TOL = 1e-9

# --- Consistency checks ---
FD_STEP = 1e-6
FD_REL_TOL = 1e-4
MINIMIZER_TOL = 1e-8
MIXTURE_TOL = 1e-10
CHECK_TRIALS = 100
CHECK_SEED = 0
DERIVATIVE_LAMBDA = 1e-4
DERIVATIVE_REL_TOL = 0.01

# --- Output ---
CSV_FLOAT_FORMAT = ".17g"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL_ENV = "HAMDESCENT_LOG_LEVEL"
DEFAULT_OUT_DIR = "./runs"
