"""Dense kernel and matrix primitives.

Gaussian RKHS kernels with a median-heuristic scale, Gram matrices, PSD
square roots, ridge-regularised solves and the Epanechnikov smoothing
kernel used for treatment localisation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _core
from .errors import (
    AllPointsEqual,
    DimensionMismatch,
    NonpositiveBandwidth,
    NotSymmetric,
    SingularAfterRidge,
    TooFewPoints,
)

DEFAULT_SUBSET_CAP = 1000
JITTER_SCALE = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel ``exp(-gamma * ||x - x'||^2)``."""

    gamma: float
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass(frozen=True)
class SmoothingKernel:
    """Second-order Epanechnikov kernel ``K(u) = 3/4 (1 - u^2) 1{|u| <= 1}``.

    ``kappa2`` is the second moment of ``K`` and ``omega2`` the integral of
    ``K^2``.
    """

    family: str = "epanechnikov"
    kappa2: float = 0.2
    omega2: float = 0.6
    support: float = 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


EPANECHNIKOV = SmoothingKernel()


def _as_rows(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a list of vectors, got shape {arr.shape}")
    return arr


def median_heuristic(points, subset_cap: int = DEFAULT_SUBSET_CAP, seed: int = 0) -> float:
    """Inverse of the median pairwise squared distance.

    When there are more than ``subset_cap`` points a seeded uniform subset of
    that size is used.

    Raises
    ------
    TooFewPoints
        Fewer than two points.
    AllPointsEqual
        The median squared distance is zero.
    """
    x = _as_rows(points)
    n = x.shape[0]
    if n < 2:
        raise TooFewPoints("median heuristic needs at least two points")
    if n > subset_cap:
        rng = np.random.default_rng(seed)
        x = x[np.sort(rng.choice(n, size=subset_cap, replace=False))]
    d = _core.sq_dists(x, x)
    iu = np.triu_indices(x.shape[0], k=1)
    med = float(np.median(d[iu]))
    if not med > 0.0:
        raise AllPointsEqual("median pairwise distance is zero")
    return 1.0 / med


def gram_matrix(rows_a, rows_b, spec: KernelSpec) -> np.ndarray:
    """Gaussian Gram matrix between two row sets."""
    a = _as_rows(rows_a)
    b = _as_rows(rows_b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"row dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return _core.gaussian_gram(a, b, spec.gamma)


def _check_symmetric(k: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {k.shape}")
    scale = max(1.0, float(np.max(np.abs(k)))) if k.size else 1.0
    if k.size and float(np.max(np.abs(k - k.T))) > rtol * scale:
        raise NotSymmetric("matrix is not symmetric")
    return k


def symmetrize(k: np.ndarray) -> np.ndarray:
    return 0.5 * (k + k.T)


def default_jitter(k: np.ndarray) -> float:
    """``1e-8 * trace(K) / n``."""
    n = k.shape[0]
    if n == 0:
        return 0.0
    return JITTER_SCALE * float(np.trace(k)) / n


def psd_sqrt(k, jitter: float | None = None) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    ``jitter`` is added to the diagonal before the eigendecomposition
    (``None`` selects :func:`default_jitter`); eigenvalues are clamped at 0.
    """
    k = _check_symmetric(k)
    if jitter is None:
        jitter = default_jitter(k)
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    n = k.shape[0]
    evals, evecs = scipy.linalg.eigh(k + jitter * np.eye(n))
    root = np.sqrt(np.maximum(evals, 0.0))
    s = (evecs * root) @ evecs.T
    return symmetrize(s)


def regularized_solve(k, rhs, ridge: float) -> np.ndarray:
    """Solve ``(k + ridge * I) x = rhs`` with a Cholesky factorization."""
    k = _check_symmetric(k)
    if not ridge > 0:
        raise ValueError("ridge must be positive")
    n = k.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != n:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, matrix has {n}")
    try:
        factor = scipy.linalg.cho_factor(k + ridge * np.eye(n), lower=True, check_finite=True)
        return scipy.linalg.cho_solve(factor, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularAfterRidge(str(exc)) from exc


def smoothing_weight(u, h_bw: float):
    """Epanechnikov weight ``K(u / h_bw) / h_bw``; scalar in, scalar out."""
    if not h_bw > 0:
        raise NonpositiveBandwidth(f"bandwidth must be positive, got {h_bw}")
    if np.isscalar(u):
        return float(_core.epanechnikov(np.array([u], dtype=float), h_bw)[0])
    u = np.asarray(u, dtype=float)
    return _core.epanechnikov(u, h_bw).reshape(u.shape)
