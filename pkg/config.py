"""
Configuration file for the stochastic Navier-Stokes simulator
Defaults used when a run configuration does not set a value
"""

import os

# Output Configuration
OUTPUT_ROOT = os.getenv('STOCH_NS2D_OUT', 'runs')
LOG_FILE = "stoch_ns2d.log"
MANIFEST_FILE = "manifest.json"
ERROR_FILE = "error.json"

# Logging Configuration
LOG_LEVEL = os.getenv('STOCH_NS2D_LOG_LEVEL', 'INFO')  # DEBUG, INFO, WARNING, ERROR, CRITICAL

# Worker pool size for trajectory ensembles
THREADS = int(os.getenv('STOCH_NS2D_THREADS', '1'))

# Lattice / norm defaults
K_MAX = 8
NORM_R = 1.5
NORM_ALPHA = 3.5
NORM_D = 2.0

# minimal_D bisection
D_CEILING = 1.0e6
MINIMAL_D_TOL = 1.0e-6

# Hermitian symmetry check tolerance (relative)
HERMITIAN_TOL = 1.0e-12

# Noise defaults
C_GAMMA = 10.0          # gamma_k <= C_GAMMA * R * exp(-|k|)
REYNOLDS = 10.0
FORCING_RADIUS = 1.5    # band forcing acts on 0 < |k| <= FORCING_RADIUS

# Time stepping
STEP_H = 0.005
SCHEME = "heun"         # heun (order 2) or euler (order 1)
DELTA = 0.05            # tau = DELTA * D**(-4 alpha)
PICARD_MAX_ITER = 50
PICARD_TOL = 1.0e-12
PICARD_GRID = 64        # uniform sub-intervals per [0, tau]
N_SUBSTEPS = 200        # grid for sup-over-time OU events

# Monte Carlo
N_TRAJ = 1000
SEED = 12345
BLOCK_SIZE = 1024       # paths per random lane in vectorized estimators

# exponential moment constant c = e^{-1}/4
EXP_MOMENT_C = 0.25 * 0.36787944117144233

# Spectrum report
SPECTRUM_SLACK = 0.5
MIN_FIT_SHELLS = 3

# Checkpoint format
CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = b"NS2D"
