"""Dose-response estimators: POR, PKIPW and PKDR."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .bridges import BridgeH, BridgeQ
from .dataset import Dataset
from .errors import ConstantTreatment, TooFewPoints

METHODS = ("por", "pkipw", "pkdr")


@dataclass(frozen=True)
class SmoothingConfig:
    """Epanechnikov window with ``h_bw = c * sigma_hat * n^(-1/5)``."""

    c: float
    sigma_hat: float
    n: int
    h_bw: float

    @classmethod
    def from_parts(cls, c: float, sigma_hat: float, n: int) -> "SmoothingConfig":
        if not (c > 0 and sigma_hat > 0 and n >= 1):
            raise ValueError("c, sigma_hat and n must be positive")
        return cls(c=c, sigma_hat=sigma_hat, n=n, h_bw=c * sigma_hat * n ** (-0.2))


def bandwidth_rule(c: float, data: Dataset) -> SmoothingConfig:
    if data.n < 2:
        raise TooFewPoints("bandwidth rule needs at least two rows")
    sigma = float(np.std(data.a, ddof=1))
    if not sigma > 0:
        raise ConstantTreatment("treatment column is constant")
    return SmoothingConfig.from_parts(c, sigma, data.n)


@dataclass(frozen=True, eq=False)
class AteCurve:
    grid: np.ndarray
    estimates: np.ndarray
    method: str

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel()
        e = np.asarray(self.estimates, dtype=float).ravel()
        if g.shape != e.shape:
            raise ValueError("grid and estimates differ in length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "estimates", e)


def make_grid(a_min: float, a_max: float, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("grid count must be at least 1")
    if count == 1:
        return np.array([float(a_min)])
    if not a_max > a_min:
        raise ValueError("grid needs a_max > a_min")
    return np.linspace(a_min, a_max, count)


def smoothing_matrix(grid, a, h_bw: float) -> np.ndarray:
    """``W[g, i] = K_h(a_i - grid[g])``."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    diff = a[None, :] - grid[:, None]
    return _core.epanechnikov(diff.ravel(), h_bw).reshape(diff.shape)


@dataclass(frozen=True, eq=False)
class BridgeEvaluations:
    """Bridge values at every (grid point, row) pair, reused across bandwidths.

    ``h_vals[g, i] = h(grid[g], w_i, x_i)`` and ``q_vals[g, i] = q(grid[g], z_i, x_i)``;
    either may be ``None`` when that bridge is not needed.
    """

    grid: np.ndarray
    y: np.ndarray
    a: np.ndarray
    h_vals: np.ndarray | None
    q_vals: np.ndarray | None

    @classmethod
    def build(cls, data: Dataset, grid, h: BridgeH | None = None, q: BridgeQ | None = None):
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        hv = None if h is None else h.grid_values(grid, data.w, data.x)
        qv = None if q is None else q.grid_values(grid, data.z, data.x)
        return cls(grid, data.y, data.a, hv, qv)

    def por(self) -> np.ndarray:
        return self.h_vals.mean(axis=1)

    def pkipw(self, h_bw: float) -> np.ndarray:
        weights = smoothing_matrix(self.grid, self.a, h_bw)
        return (weights * self.q_vals * self.y[None, :]).mean(axis=1)

    def pkdr(self, h_bw: float) -> np.ndarray:
        weights = smoothing_matrix(self.grid, self.a, h_bw)
        resid = self.y[None, :] - self.h_vals
        return (weights * resid * self.q_vals + self.h_vals).mean(axis=1)

    def estimate(self, method: str, h_bw: float | None = None) -> np.ndarray:
        if method == "por":
            return self.por()
        if h_bw is None:
            raise ValueError(f"method {method!r} needs a smoothing bandwidth")
        if method == "pkipw":
            return self.pkipw(h_bw)
        if method == "pkdr":
            return self.pkdr(h_bw)
        raise ValueError(f"unknown method {method!r}")


def por(h: BridgeH, data: Dataset, a: float) -> float:
    """Mean of ``h(a, w_i, x_i)`` over rows."""
    return float(BridgeEvaluations.build(data, [a], h=h).por()[0])


def pkipw(q: BridgeQ, data: Dataset, a: float, smooth: SmoothingConfig) -> float:
    """Kernel-localised inverse weighting ``mean K_h(a_i - a) q(a, z_i, x_i) y_i``."""
    return float(BridgeEvaluations.build(data, [a], q=q).pkipw(smooth.h_bw)[0])


def pkdr(h: BridgeH, q: BridgeQ, data: Dataset, a: float, smooth: SmoothingConfig) -> float:
    """Doubly robust combination: POR plus the localised, q-weighted residual."""
    return float(BridgeEvaluations.build(data, [a], h=h, q=q).pkdr(smooth.h_bw)[0])


def estimate_curve(method: str, models: dict, data: Dataset, grid_spec, smooth: SmoothingConfig | None = None) -> AteCurve:
    """Apply one estimator on a uniform treatment grid.

    ``models`` maps ``"h"``/``"q"`` to fitted bridges; ``grid_spec`` is
    ``(a_min, a_max, count)``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    grid = make_grid(*grid_spec)
    h = models.get("h") if method in ("por", "pkdr") else None
    q = models.get("q") if method in ("pkipw", "pkdr") else None
    if method in ("por", "pkdr") and h is None:
        raise ValueError(f"method {method!r} needs an outcome bridge")
    if method in ("pkipw", "pkdr") and q is None:
        raise ValueError(f"method {method!r} needs a treatment bridge")
    evals = BridgeEvaluations.build(data, grid, h=h, q=q)
    h_bw = None if smooth is None else smooth.h_bw
    return AteCurve(grid, evals.estimate(method, h_bw), method)
