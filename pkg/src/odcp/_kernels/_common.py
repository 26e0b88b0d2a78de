EULER_GAMMA = 0.5772156649015329

ALPHA_MIN = 1e-3
ALPHA_MAX = 1e6

# step halvings tried before a Newton iteration falls back to a fixed-point step
MAX_HALVINGS = 30

METHOD_FIXED_POINT = 0
METHOD_NEWTON = 1

# bit flags returned per fit
FLAG_NONCONVERGED = 1
FLAG_CLAMPED = 2
