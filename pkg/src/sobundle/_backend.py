"""Kernel backend selection: numba-jitted hot loops with a pure-numpy fallback.

The environment variable ``SOBUNDLE_BACKEND`` picks the backend:

* ``numba`` (default when numba imports): hot kernels are compiled with
  ``@njit(cache=True)``.
* ``numpy``: the same kernel functions run as plain Python/numpy.

Kernels are written once in numba-compatible numpy style; ``maybe_jit``
either compiles them or returns them unchanged, so both paths share one
source of truth.  ``benchmarks/backend_bench.py`` times the two paths
against each other.
"""

import os
import warnings

_requested = os.environ.get("SOBUNDLE_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    warnings.warn(
        f"SOBUNDLE_BACKEND={_requested!r} not recognized; expected 'numba' or "
        "'numpy'. Falling back to 'numpy'.",
        stacklevel=1,
    )
    _requested = "numpy"

if _requested == "numpy":
    NUMBA_ENABLED = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        if _requested == "numba":
            raise
        NUMBA_ENABLED = False

BACKEND = "numba" if NUMBA_ENABLED else "numpy"


def maybe_jit(func):
    """Compile ``func`` with numba when the numba backend is active.

    The original Python function stays reachable as ``.py_func`` (numba)
    or as the returned object itself (numpy backend).
    """
    if not NUMBA_ENABLED:
        return func
    from numba import njit

    return njit(cache=True)(func)
