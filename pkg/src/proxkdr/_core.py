"""Backend selection for the numerical hot loops.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Setting ``PROXKDR_PURE_PYTHON=1`` forces the numpy
path, which is how the test-suite compares the two.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PROXKDR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def _rows(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def sq_dists(a, b):
    """Matrix of squared Euclidean distances between rows of ``a`` and ``b``."""
    return _impl.sq_dists(_rows(a), _rows(b))


def gaussian_gram(a, b, gamma):
    """``exp(-gamma * ||a_i - b_j||^2)`` for every pair of rows."""
    return _impl.gaussian_gram(_rows(a), _rows(b), float(gamma))


def gaussian_expand(queries, centers, weights, gamma):
    """``sum_j weights[j] * exp(-gamma * ||q_i - c_j||^2)`` for every query row."""
    w = np.ascontiguousarray(weights, dtype=np.float64).ravel()
    return _impl.gaussian_expand(_rows(queries), _rows(centers), w, float(gamma))


def epanechnikov(u, h_bw):
    """Scaled Epanechnikov weights ``K(u / h) / h`` (vectorised)."""
    arr = np.ascontiguousarray(u, dtype=np.float64).ravel()
    return _impl.epanechnikov(arr, float(h_bw))
