"""Kernel backend selection.

Two interchangeable backends implement the loop-heavy kernels: a compiled
Cython extension (``_fastkernels``) and a pure-NumPy fallback
(``_reference``).  The compiled backend is preferred when importable; the
environment variable ``SHIMSENSE_BACKEND`` (``auto`` | ``cython`` | ``numpy``)
overrides the choice, and :func:`set_backend` switches at runtime (used by
the benchmark and the backend-equivalence tests).
"""

import os
import warnings

from . import _reference
from ..errors import ParameterError

_BACKENDS = {"numpy": _reference}
try:
    from . import _fastkernels
    _BACKENDS["cython"] = _fastkernels
except ImportError:
    _fastkernels = None

_active = "cython" if "cython" in _BACKENDS else "numpy"

_requested = os.environ.get("SHIMSENSE_BACKEND", "auto").strip().lower()
if _requested in ("", "auto"):
    pass
elif _requested in _BACKENDS:
    _active = _requested
elif _requested == "cython":
    warnings.warn("SHIMSENSE_BACKEND=cython requested but the compiled "
                  "extension is not available; using the NumPy backend")
else:
    warnings.warn(f"unknown SHIMSENSE_BACKEND={_requested!r}; using {_active}")


def available_backends():
    """Names of importable kernel backends."""
    return tuple(sorted(_BACKENDS))


def active_backend():
    """Name of the backend currently dispatching kernel calls."""
    return _active


def set_backend(name):
    """Select the kernel backend by name.  Not thread-safe."""
    global _active
    if name not in _BACKENDS:
        raise ParameterError(
            f"unknown kernel backend {name!r}; available: {available_backends()}")
    _active = name


def backend_module(name=None):
    """Return the backend module itself (for direct benchmarking)."""
    key = _active if name is None else name
    if key not in _BACKENDS:
        raise ParameterError(
            f"unknown kernel backend {key!r}; available: {available_backends()}")
    return _BACKENDS[key]


def pivot_columns(a, max_pivots, tol):
    return _BACKENDS[_active].pivot_columns(a, max_pivots, tol)


def soft_threshold(x, tau, out):
    return _BACKENDS[_active].soft_threshold(x, tau, out)
