"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly. Setting the environment
variable ``BLVKIT_DISABLE_NUMBA=1`` before import forces the numpy path.
Both paths satisfy the same contracts; results agree to rounding, not bitwise.
"""

import os

_FLAG = "BLVKIT_DISABLE_NUMBA"


def _disabled():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _disabled():
        raise ImportError(f"{_FLAG} set")
    from . import numba_impl as _impl
except ImportError:
    from . import numpy_impl as _impl

BACKEND = _impl.BACKEND

log_softmax_rows = _impl.log_softmax_rows
softmax_rows = _impl.softmax_rows
ce_rows = _impl.ce_rows
focal_rows = _impl.focal_rows
cond_affinities = _impl.cond_affinities
tsne_gradient = _impl.tsne_gradient
confusion_counts = _impl.confusion_counts
metric_core = _impl.metric_core


def available_backends():
    """Names of importable kernel backends, numpy first."""
    names = ["numpy"]
    try:
        from . import numba_impl  # noqa: F401
    except ImportError:
        return names
    names.append("numba")
    return names


def load_backend(name):
    """Return the kernel module for ``name`` regardless of the env flag."""
    if name == "numpy":
        from . import numpy_impl

        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")
