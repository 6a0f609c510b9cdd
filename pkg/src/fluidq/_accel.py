"""Backend selection for the O(n^2) history kernels.

Set ``FLUIDQ_DISABLE_NUMBA=1`` to force the pure-numpy implementations.
"""
from __future__ import annotations

import os

DISABLE_ENV = "FLUIDQ_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in ("", "0", "false", "no")


def default_backend() -> str:
    return "numba" if HAVE_NUMBA and not numba_disabled() else "numpy"


def njit(fn):
    """Compile with numba when available; otherwise return ``fn`` unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def resolve(backend: str | None) -> str:
    backend = backend or default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend '{backend}'")
    if backend == "numba" and not HAVE_NUMBA:
        return "numpy"
    return backend
