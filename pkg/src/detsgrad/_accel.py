"""Backend selection for the hot kernels.

Set ``DETSGRAD_BACKEND=numpy`` to bypass numba entirely; the default is
``numba`` when it imports cleanly.
"""
import os

BACKEND = os.environ.get("DETSGRAD_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"DETSGRAD_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        import numba
    except ImportError:  # pragma: no cover
        BACKEND = "numpy"

USE_NUMBA = BACKEND == "numba"


def njit(fn):
    """``numba.njit(cache=True)`` when the numba backend is active, else identity."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
