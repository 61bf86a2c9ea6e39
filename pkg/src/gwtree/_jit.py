"""Backend selection for the numeric kernels.

Kernels are plain Python functions written in the subset numba understands.
They are compiled with ``numba.njit`` unless ``GWTREE_NO_NUMBA`` is set to a
non-empty value other than ``0`` (or numba is missing), in which case the same
source runs under the interpreter on numpy arrays.
"""
import os

_flag = os.environ.get("GWTREE_NO_NUMBA", "").strip()
_disabled = _flag not in ("", "0")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not _disabled
BACKEND = "numba" if USE_NUMBA else "python"


def njit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def python_impl(fn):
    """Return the uncompiled implementation of a kernel."""
    return getattr(fn, "py_func", fn)
