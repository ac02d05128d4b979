"""Hot-path kernels with a compiled core and a pure-Python fallback.

The compiled extension (`_speedups`, built from Cython) and the fallback
(`pyback`) implement the same functions with identical semantics, including
tie-breaking. Import-time selection prefers the extension; set
POOLDISPATCH_PURE=1 to force the fallback (used by the parity tests and the
benchmark).
"""

import os

from . import pyback

_impl = pyback
BACKEND = "python"

if not os.environ.get("POOLDISPATCH_PURE"):
    try:
        from . import _speedups

        _impl = _speedups
        BACKEND = "compiled"
    except ImportError:
        pass

all_pairs = _impl.all_pairs
best_insertion = _impl.best_insertion
walk_route = _impl.walk_route
batch_serve = _impl.batch_serve
batch_walk = _impl.batch_walk

INF = pyback.INF
MAX_STOPS = pyback.MAX_STOPS


def available_backends():
    """Names of importable backends (the benchmark iterates over these)."""
    names = ["python"]
    try:
        from . import _speedups  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Return the backend module for `name` ('python' or 'compiled')."""
    if name == "python":
        return pyback
    if name == "compiled":
        from . import _speedups

        return _speedups
    raise ValueError(f"unknown backend {name!r}")
