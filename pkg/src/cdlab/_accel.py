"""Optional numba acceleration.

Set ``CDLAB_DISABLE_NUMBA=1`` to force the pure numpy code paths. The flag is
read once at import; :func:`set_backend` switches at runtime (tests and the
benchmark use it to compare both paths).
"""

import os

try:
    from numba import njit as _numba_njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False
    _numba_njit = None


def _env_disabled():
    return os.environ.get("CDLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


_state = {"backend": "numba" if NUMBA_AVAILABLE and not _env_disabled() else "numpy"}


def njit(*args, **kwargs):
    """``numba.njit`` when importable, identity decorator otherwise."""
    if _numba_njit is not None:
        return _numba_njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend():
    return _state["backend"]


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    prev = _state["backend"]
    _state["backend"] = name
    return prev
