"""Kernel backend selection.

The hot inner loops (membership evaluation and the sampling chains) exist in
two flavours: a numba ``@njit``-compiled one and a pure-numpy/Python one.
Both are generated from the same source functions, consume the random stream
in the same order and therefore produce bit-identical output.

The active backend is chosen once at import time from the environment
variable ``PROXANNEAL_BACKEND``:

* ``numba``  - require numba; raise if it cannot be imported.
* ``numpy``  - skip compilation, run the kernels as plain Python/numpy.
* unset     - use numba when available, otherwise fall back to numpy.
"""

from __future__ import annotations

import os

ENV_VAR = "PROXANNEAL_BACKEND"

_requested = os.environ.get(ENV_VAR, "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"{ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}"
    )

try:
    import numba as _numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    _numba = None
    _HAVE_NUMBA = False

if _requested == "numba" and not _HAVE_NUMBA:  # pragma: no cover
    raise RuntimeError("PROXANNEAL_BACKEND=numba but numba is not importable")

ACTIVE_BACKEND = "numpy" if _requested == "numpy" or not _HAVE_NUMBA else "numba"


def active_backend() -> str:
    """Name of the backend selected at import time."""
    return ACTIVE_BACKEND


def jit_for(backend: str):
    """Return the function wrapper for *backend*.

    ``numba`` gives an ``njit(nogil=True)`` compiler, ``numpy`` the identity.
    """
    if backend == "numba":
        if not _HAVE_NUMBA:  # pragma: no cover
            raise RuntimeError("numba backend requested but numba is missing")
        return _numba.njit(cache=False, nogil=True)
    if backend == "numpy":
        return lambda fn: fn
    raise ValueError(f"unknown backend {backend!r}")
