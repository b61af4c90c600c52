"""Estimation of the policy (generalised propensity) density p(a | w, x)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _core
from .dataset import Dataset
from .errors import DegenerateColumn, DimensionMismatch, EmptyGrid, MarginalUnderflow, TooFewPoints

LOG_SCORE_FLOOR = np.log(1e-12)
MARGINAL_FLOOR = 1e-300
DEFAULT_CLIP_FLOOR = 1e-3
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class BandwidthGrid:
    values: tuple = field(default_factory=lambda: tuple(np.logspace(-1.0, 1.0, 20)))
    folds: int = 3

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 0:
            raise EmptyGrid("bandwidth grid is empty")
        if np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
            raise ValueError("bandwidth grid must be positive and strictly increasing")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))


@dataclass(frozen=True, eq=False)
class KdePolicy:
    """Conditional KDE ``p(a|w,x) = KDE(a,w,x) / KDE(w,x)``.

    Both densities use Gaussian product kernels with one shared bandwidth
    on standardised coordinates. ``train`` holds standardised ``(a, w, x)``
    rows; ``mean`` and ``scale`` map raw coordinates onto them.
    """

    train: np.ndarray
    bandwidth: float
    mean: np.ndarray
    scale: np.ndarray
    kind: str = "kde"

    def _standardize(self, a, wx):
        raw = np.column_stack([np.atleast_1d(a), wx])
        if raw.shape[1] != self.train.shape[1]:
            raise DimensionMismatch(
                f"query has {raw.shape[1] - 1} conditioning columns, model has {self.train.shape[1] - 1}"
            )
        return (raw - self.mean) / self.scale

    def log_density(self, a, w, x=None) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        wx = _conditioning(w, x, a.shape[0])
        q = self._standardize(a, wx)
        h = self.bandwidth
        n, d = self.train.shape
        gamma = 0.5 / (h * h)
        log_kwx = -gamma * _core.sq_dists(q[:, 1:], self.train[:, 1:])
        log_ka = -gamma * (q[:, :1] - self.train[:, 0][None, :]) ** 2
        log_marg = logsumexp(log_kwx, axis=1)
        # normalised marginal KDE value at the query, for the underflow guard
        marg_norm = log_marg - np.log(n) - (d - 1) * (np.log(h) + _LOG_SQRT_2PI)
        if np.any(marg_norm < np.log(MARGINAL_FLOOR)):
            raise MarginalUnderflow("conditioning point lies outside the KDE support")
        log_joint = logsumexp(log_kwx + log_ka, axis=1)
        return log_joint - log_marg - np.log(h) - _LOG_SQRT_2PI - np.log(self.scale[0])

    def density(self, a, w, x=None) -> np.ndarray:
        return np.exp(self.log_density(a, w, x))

    def to_dict(self) -> dict:
        return {
            "kind": "kde",
            "bandwidth": self.bandwidth,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "train": self.train.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ParametricGaussianPolicy:
    """Linear-Gaussian policy ``a | w, x ~ N([w, x, 1] @ weights, sigma^2)``."""

    weights: np.ndarray
    sigma: float
    kind: str = "parametric"

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("residual sigma must be positive")

    def log_density(self, a, w, x=None) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        wx = _conditioning(w, x, a.shape[0])
        design = np.column_stack([wx, np.ones(a.shape[0])])
        if design.shape[1] != self.weights.shape[0]:
            raise DimensionMismatch(
                f"query has {design.shape[1] - 1} conditioning columns, model has {self.weights.shape[0] - 1}"
            )
        resid = (a - design @ self.weights) / self.sigma
        return -0.5 * resid * resid - np.log(self.sigma) - _LOG_SQRT_2PI

    def density(self, a, w, x=None) -> np.ndarray:
        return np.exp(self.log_density(a, w, x))

    def to_dict(self) -> dict:
        return {"kind": "parametric", "weights": self.weights.tolist(), "sigma": self.sigma}


PolicyModel = KdePolicy | ParametricGaussianPolicy


def _conditioning(w, x, n: int) -> np.ndarray:
    blocks = []
    for block in (w, x):
        if block is None:
            continue
        arr = np.asarray(block, dtype=float)
        if arr.size == 0:
            continue
        if arr.ndim < 2:
            # one query vector when n == 1, otherwise one column over n queries
            arr = arr.reshape(n, -1)
        blocks.append(arr)
    if not blocks:
        return np.zeros((n, 0))
    return np.column_stack(blocks)


def _standardization(rows: np.ndarray):
    mean = rows.mean(axis=0)
    scale = rows.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise DegenerateColumn(f"zero-variance coordinate(s) {bad.tolist()}")
    return mean, scale


def _heldout_scores(train: np.ndarray, test: np.ndarray, bandwidths) -> np.ndarray:
    """Mean floored held-out log conditional density for each bandwidth."""
    d_wx = _core.sq_dists(test[:, 1:], train[:, 1:])
    d_a = (test[:, :1] - train[:, 0][None, :]) ** 2
    scores = []
    for h in bandwidths:
        gamma = 0.5 / (h * h)
        log_kwx = -gamma * d_wx
        log_cond = (
            logsumexp(log_kwx - gamma * d_a, axis=1)
            - logsumexp(log_kwx, axis=1)
            - np.log(h)
            - _LOG_SQRT_2PI
        )
        log_cond = np.where(np.isfinite(log_cond), log_cond, LOG_SCORE_FLOOR)
        scores.append(np.maximum(log_cond, LOG_SCORE_FLOOR).mean())
    return np.asarray(scores)


def fit_kde_policy(data: Dataset, grid: BandwidthGrid | None = None, seed: int = 0) -> KdePolicy:
    """Fit a conditional KDE with the bandwidth chosen by K-fold CV."""
    grid = BandwidthGrid() if grid is None else grid
    if data.n < 30:
        raise TooFewPoints("KDE policy needs at least 30 rows")
    rows = np.column_stack([data.a, data.wx()])
    if not np.all(np.isfinite(rows)):
        raise ValueError("non-finite values in (a, w, x)")
    mean, scale = _standardization(rows)
    std_rows = (rows - mean) / scale
    folds = np.random.default_rng(seed).permutation(data.n) % grid.folds
    total = np.zeros(len(grid.values))
    for k in range(grid.folds):
        test = folds == k
        total += _heldout_scores(std_rows[~test], std_rows[test], grid.values)
    best = float(grid.values[int(np.argmax(total))])
    return KdePolicy(train=std_rows, bandwidth=best, mean=mean, scale=scale)


def fit_parametric_policy(data: Dataset) -> ParametricGaussianPolicy:
    """Least-squares regression of ``a`` on ``(w, x, 1)`` with Gaussian residuals."""
    design = np.column_stack([data.wx(), np.ones(data.n)])
    weights, *_ = np.linalg.lstsq(design, data.a, rcond=None)
    resid = data.a - design @ weights
    dof = max(data.n - design.shape[1], 1)
    sigma = float(np.sqrt(resid @ resid / dof))
    return ParametricGaussianPolicy(weights=weights, sigma=sigma)


def density_at(model, a: float, w, x=None) -> float:
    """Conditional density of a single treatment value at one ``(w, x)``."""
    return float(model.density(np.array([a], dtype=float), w, x)[0])


def reciprocal_density(model, rows: Dataset, clip_floor: float = DEFAULT_CLIP_FLOOR) -> np.ndarray:
    """``1 / max(p(a_i | w_i, x_i), clip_floor)`` for every row."""
    if not clip_floor > 0:
        raise ValueError("clip_floor must be positive")
    dens = model.density(rows.a, rows.w, rows.x)
    return 1.0 / np.maximum(dens, clip_floor)


def policy_from_dict(doc: dict):
    if doc["kind"] == "kde":
        return KdePolicy(
            train=np.asarray(doc["train"], dtype=float),
            bandwidth=float(doc["bandwidth"]),
            mean=np.asarray(doc["mean"], dtype=float),
            scale=np.asarray(doc["scale"], dtype=float),
        )
    if doc["kind"] == "parametric":
        return ParametricGaussianPolicy(weights=np.asarray(doc["weights"]), sigma=float(doc["sigma"]))
    raise ValueError(f"unknown policy kind {doc['kind']!r}")
