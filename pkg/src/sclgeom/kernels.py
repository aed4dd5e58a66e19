"""Backend selection for the loss/gradient kernel.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``SCLGEOM_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy implementation is used.
"""

import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

_force_pure = os.environ.get("SCLGEOM_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
        log.debug("compiled kernel unavailable; using numpy fallback")

BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the ``batch_terms`` implementation for ``name`` (``cython``,
    ``python`` or None for the import-time default)."""
    name = name or BACKEND
    if name == "python":
        return _kernels_py.batch_terms
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        return _compiled.batch_terms
    raise ValueError(f"unknown backend {name!r}")


def pack_batches(batches):
    """Flatten a sequence of index lists into ``(flat, offsets)`` int64 arrays."""
    sizes = [len(b) for b in batches]
    offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    flat = np.fromiter((i for b in batches for i in b), dtype=np.int64, count=int(offsets[-1]))
    return flat, offsets


def batch_terms(H, labels, flat, offsets, k, tau, want_grad=True, backend=None):
    """Unscaled mini-batch SCL sum and its gradient with respect to ``H``.

    ``H`` is ``(d, n)``; the returned gradient has the same shape.
    """
    X = np.ascontiguousarray(np.asarray(H, dtype=np.float64).T)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    fn = get_backend(backend)
    value, grad = fn(X, labels, flat, offsets, int(k), 1.0 / tau, bool(want_grad))
    return value, (grad.T if grad is not None else None)
