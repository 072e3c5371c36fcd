"""Engine-wide constants and defaults."""

# Window fixed point
DEFAULT_MAX_ITERS = 50
DEFAULT_STAGNATION_WINDOW = 5
DEFAULT_TOL_PER_MASS = 1e-4  # tol = DEFAULT_TOL_PER_MASS * initial mass
MIN_ITERS = 2  # E_2 is always reported

# Value function saturation ("+inf" stand-in)
WALL_VALUE_FACTOR = 10.0

# Numerical slack
NEGATIVE_DENSITY_TOL = 1e-14
CFL_SLACK = 1e-12  # relative, absorbs rounding in dt*|V| == dx
CFL_WARN_MARGIN = 0.1
STENCIL_RADIUS_SLACK = 1e-9  # relative, so that 3*dx == R is inside the annulus

# Control set: K points on the unit circle
DEFAULT_NUM_CONTROLS = 32

# Interaction radii used in every builtin test
DEFAULT_R0 = 0.01
DEFAULT_R = 0.06

# Oracle size caps
ORACLE_MAX_CELLS = 25
ORACLE_MAX_STEPS = 60

# Fraction of the initial mass that defines "evacuated"
EVACUATION_FRACTION = 0.99

# Downward split: share of the interior mass whose chosen direction has
# x2 component below -DOWNWARD_MIN_SLOPE
DOWNWARD_SPLIT_FRACTION = 0.02
DOWNWARD_MIN_SLOPE = 0.5
