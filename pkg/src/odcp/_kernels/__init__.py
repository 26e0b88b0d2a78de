"""Backend selection for the numeric kernels.

The compiled numba path is used unless ``ODCP_DISABLE_NUMBA`` is set to a
truthy value or numba cannot be imported; the pure-numpy path is then used.
The choice is made once, at import time.
"""

import os

from . import _numpy
from ._common import (  # noqa: F401
    ALPHA_MAX,
    ALPHA_MIN,
    EULER_GAMMA,
    FLAG_CLAMPED,
    FLAG_NONCONVERGED,
    METHOD_FIXED_POINT,
    METHOD_NEWTON,
)

_DISABLE = os.environ.get("ODCP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

_compiled = None
if not _DISABLE:
    try:
        from . import _numba as _compiled
    except ImportError:  # pragma: no cover - numba is an install requirement
        _compiled = None

active = _compiled if _compiled is not None else _numpy
BACKEND = active.BACKEND


def backends():
    """Return the importable kernel modules keyed by name."""
    out = {"numpy": _numpy}
    if _compiled is not None:
        out["numba"] = _compiled
    else:
        try:
            from . import _numba as compiled
        except ImportError:  # pragma: no cover
            return out
        out["numba"] = compiled
    return out
