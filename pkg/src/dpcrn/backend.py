"""Kernel backend selection.

Hot inner loops (LSTM recursions, per-tap convolution accumulation) exist in
two functionally identical flavours: numba @njit and pure numpy. The choice is
made once at import time from the DPCRN_BACKEND environment variable:

    DPCRN_BACKEND=auto    use numba when importable, else numpy (default)
    DPCRN_BACKEND=numba   require numba, fail loudly if missing
    DPCRN_BACKEND=numpy   force the pure-numpy path

``benchmarks/backend_bench.py`` compares the two.
"""

import os

_choice = os.environ.get("DPCRN_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"DPCRN_BACKEND must be one of auto/numba/numpy, got {_choice!r}"
    )

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:
    numba = None
    NUMBA_AVAILABLE = False

if _choice == "numba" and not NUMBA_AVAILABLE:
    raise RuntimeError("DPCRN_BACKEND=numba but numba is not importable")

USE_NUMBA = NUMBA_AVAILABLE and _choice != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(fn):
    """Compile fn with numba when the numba backend is active, else return it
    unchanged. fastmath stays off: tests rely on deterministic, reassociation-
    free arithmetic."""
    if USE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(fn)
    return fn
