"""Numba switch for the hot kernels.

Kernels are written in the subset of Python that numba compiles. Setting the
environment variable ``VOLMBO_DISABLE_NUMBA=1`` before import (or running
without numba installed) turns :func:`njit` into the identity, so the very
same source runs interpreted on top of numpy.
"""
import os

_flag = os.environ.get("VOLMBO_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def njit(fn=None, **kwargs):
    if fn is None:
        return lambda f: njit(f, **kwargs)
    if not HAVE_NUMBA:
        return fn
    kwargs.setdefault("cache", True)
    return _numba_njit(**kwargs)(fn)


def backend():
    """Name of the active kernel backend: ``"numba"`` or ``"python"``."""
    return "numba" if HAVE_NUMBA else "python"
