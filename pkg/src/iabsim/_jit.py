"""Kernel backend selection.

Hot loops (slot-level MAC scheduling, per-slot mobility SNR scans) are written
as plain numpy/scalar Python and compiled with numba when available.  Setting
``IABSIM_BACKEND=python`` forces the uncompiled path; both paths execute the
same source, so results agree up to libm rounding.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("IABSIM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "python"):
    raise RuntimeError(f"IABSIM_BACKEND must be 'numba' or 'python', got {_requested!r}")

USE_NUMBA = numba is not None and _requested == "numba"


def backend_name() -> str:
    return "numba" if USE_NUMBA else "python"


def maybe_njit(func=None, **options):
    """@njit when the numba backend is active, identity otherwise."""

    def wrap(f):
        if USE_NUMBA:
            options.setdefault("cache", True)
            return numba.njit(**options)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def py_func(kernel):
    """The uncompiled Python function behind a (possibly jitted) kernel."""
    return getattr(kernel, "py_func", kernel)
