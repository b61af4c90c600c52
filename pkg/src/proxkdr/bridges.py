"""Outcome and treatment bridge functions fitted by regularised RKHS min-max.

Both bridges solve a conditional moment restriction through an adversarial
critic. With the critic and the bridge in Gaussian RKHSs the inner maximum
and the outer minimiser are available in closed form:

* critic projection ``P = K_c^{1/2} ((ratio / n) K_c + I)^{-1} K_c^{1/2}``
* dual weights ``(K P K + 4 prod K)^{-1} K P target``

The outcome bridge ``h(a, w, x)`` uses a critic over ``(a, z, x)`` and the
outcome as target. The treatment bridge ``q(a, z, x)`` uses a critic over
``(a, w, x)`` and the clipped reciprocal policy density as target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _core
from .dataset import Dataset
from .errors import DimensionMismatch, NonFiniteWeights, SingularAfterRidge, SolveFailure, TooFewPoints
from .kernel_algebra import (
    DEFAULT_SUBSET_CAP,
    KernelSpec,
    gram_matrix,
    median_heuristic,
    psd_sqrt,
    regularized_solve,
    symmetrize,
)
from .policy import DEFAULT_CLIP_FLOOR, reciprocal_density

MIN_ROWS = 10


@dataclass(frozen=True)
class MinimaxHyper:
    """Identified regularisation constants of the min-max problem.

    ``ratio`` is the stabiliser-to-RKHS-penalty ratio of the critic and
    ``prod`` the product of the bridge and critic RKHS penalties; ``s`` is
    the scale used to derive ``prod`` from ``ratio``.
    """

    ratio: float
    prod: float
    s: float = 1.0

    def __post_init__(self):
        for name in ("ratio", "prod", "s"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


def default_hyper(n: int, s: float = 1.0) -> MinimaxHyper:
    """``ratio = 5 / n^0.4`` and ``prod = (s / 2) ratio^4``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    ratio = 5.0 / n**0.4
    return MinimaxHyper(ratio=ratio, prod=0.5 * s * ratio**4, s=s)


@dataclass(frozen=True, eq=False)
class _Bridge:
    weights: np.ndarray
    train: np.ndarray
    kernel: KernelSpec
    # column count of the proxy block; the rest after it is x
    proxy_dim: int
    hyper: MinimaxHyper | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        t = np.asarray(self.train, dtype=float)
        if t.ndim != 2 or t.shape[0] != w.shape[0]:
            raise DimensionMismatch("dual weights and training rows disagree in length")
        if not np.all(np.isfinite(w)):
            raise NonFiniteWeights("dual weights contain non-finite values")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "train", t)

    def _rows(self, a, proxy, x) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        n = a.shape[0]
        blocks = [a[:, None]]
        for block in (proxy, x):
            if block is None:
                continue
            arr = np.asarray(block, dtype=float)
            if arr.size == 0:
                continue
            blocks.append(arr.reshape(n, -1) if arr.ndim < 2 else arr)
        rows = np.column_stack(blocks)
        if rows.shape[1] != self.train.shape[1]:
            raise DimensionMismatch(f"query rows have {rows.shape[1]} columns, model has {self.train.shape[1]}")
        return rows

    def predict(self, a, proxy, x=None) -> np.ndarray:
        """Evaluate the kernel expansion at rows ``(a_i, proxy_i, x_i)``."""
        rows = self._rows(a, proxy, x)
        return _core.gaussian_expand(rows, self.train, self.weights, self.kernel.gamma)

    def grid_values(self, grid, proxy, x=None) -> np.ndarray:
        """Matrix ``V[g, i] = f(grid[g], proxy_i, x_i)``.

        The Gaussian kernel factorises over the treatment coordinate and the
        remaining coordinates, so the whole matrix is one matrix product.
        """
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        rest = self._rows(np.zeros(len(np.asarray(proxy))), proxy, x)[:, 1:]
        g = self.kernel.gamma
        k_a = _core.gaussian_gram(grid[:, None], self.train[:, :1], g)
        k_rest = _core.gaussian_gram(rest, self.train[:, 1:], g)
        return (k_a * self.weights[None, :]) @ k_rest.T

    def scaled(self, factor: float):
        return type(self)(self.weights * factor, self.train, self.kernel, self.proxy_dim, self.hyper)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "gamma": self.kernel.gamma,
            "proxy_dim": self.proxy_dim,
            "train": self.train.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict):
        return cls(
            np.asarray(doc["weights"], dtype=float),
            np.asarray(doc["train"], dtype=float),
            KernelSpec(float(doc["gamma"])),
            int(doc["proxy_dim"]),
        )


class BridgeH(_Bridge):
    """Outcome bridge ``h(a, w, x) = sum_i alpha_i k((a_i, w_i, x_i), (a, w, x))``."""

    @property
    def alpha(self) -> np.ndarray:
        return self.weights


class BridgeQ(_Bridge):
    """Treatment bridge ``q(a, z, x) = sum_i beta_i k((a_i, z_i, x_i), (a, z, x))``."""

    @property
    def beta(self) -> np.ndarray:
        return self.weights


def critic_projection(k_critic: np.ndarray, ratio: float) -> np.ndarray:
    """``K^{1/2} ((ratio / n) K + I)^{-1} K^{1/2}``."""
    n = k_critic.shape[0]
    root = psd_sqrt(k_critic)
    # ((ratio/n) K + I)^{-1} = (n/ratio) (K + (n/ratio) I)^{-1}
    ridge = n / ratio
    inner = regularized_solve(k_critic, root, ridge) * ridge
    return symmetrize(root @ inner)


def solve_dual_weights(k_model: np.ndarray, projection: np.ndarray, target: np.ndarray, prod: float) -> np.ndarray:
    """A solution of ``(K P K + 4 prod K) w = K P target``.

    Cancelling the leading ``K`` leaves ``(P K + 4 prod I) w = P target``,
    whose matrix has spectrum bounded below by ``4 prod``; any solution of it
    also solves the full system, and it is the only one when ``K`` is
    invertible. This avoids the cubic power of ``K``, whose condition number
    routinely exceeds 1e30 for Gaussian Gram matrices.
    """
    n = k_model.shape[0]
    system = projection @ k_model + 4.0 * prod * np.eye(n)
    try:
        weights = scipy.linalg.solve(system, projection @ target, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(weights)):
        raise NonFiniteWeights("dual weights contain non-finite values")
    return weights


def inner_max_value(psi, k_critic, ratio: float, gamma_critic: float) -> float:
    """Closed-form value of the critic's regularised inner maximisation.

    ``psi`` is the (already 1/n-scaled) residual vector; the value is
    ``psi' K^{1/2} ((ratio/n) K + I)^{-1} K^{1/2} psi / (4 gamma_critic)``.
    """
    if not gamma_critic > 0:
        raise ValueError("gamma_critic must be positive")
    psi = np.asarray(psi, dtype=float).ravel()
    k = np.asarray(k_critic, dtype=float)
    if k.shape != (psi.shape[0], psi.shape[0]):
        raise DimensionMismatch("psi and critic Gram matrix disagree in size")
    try:
        proj = critic_projection(k, ratio)
    except SingularAfterRidge as exc:
        raise SolveFailure(str(exc)) from exc
    return float(psi @ proj @ psi) / (4.0 * gamma_critic)


DEFAULT_S_GRID = tuple(float(v) for v in np.geomspace(0.1, 1e4, 11))
DEFAULT_CV_FOLDS = 5


def _kernels(model_rows, critic_rows, seed, subset_cap):
    spec_model = KernelSpec(median_heuristic(model_rows, subset_cap, seed))
    spec_critic = KernelSpec(median_heuristic(critic_rows, subset_cap, seed))
    k_model = gram_matrix(model_rows, model_rows, spec_model)
    k_critic = gram_matrix(critic_rows, critic_rows, spec_critic)
    return spec_model, k_model, k_critic


def _projection(k_critic, ratio):
    try:
        return critic_projection(k_critic, ratio)
    except SingularAfterRidge as exc:
        raise SolveFailure(str(exc)) from exc


def cv_scores(k_model, k_critic, target, s_grid=DEFAULT_S_GRID, folds: int = DEFAULT_CV_FOLDS,
              seed: int = 0) -> np.ndarray:
    """Held-out moment violation for each candidate ``s``.

    For every fold the bridge is fitted on the remaining rows with the
    default hyperparameters at that sample size, and scored by
    ``res' P res / m^2`` where ``res`` is the held-out residual, ``P`` the
    critic projection built on the held-out rows and ``m`` their count.
    """
    n = k_model.shape[0]
    target = np.asarray(target, dtype=float)
    assign = np.random.default_rng(seed).permutation(n) % folds
    scores = np.zeros((folds, len(s_grid)))
    for f in range(folds):
        te = np.flatnonzero(assign == f)
        tr = np.flatnonzero(assign != f)
        hyp_tr = default_hyper(len(tr))
        p_tr = _projection(k_critic[np.ix_(tr, tr)], hyp_tr.ratio)
        p_te = _projection(k_critic[np.ix_(te, te)], default_hyper(len(te)).ratio)
        k_tr = k_model[np.ix_(tr, tr)]
        for j, s in enumerate(s_grid):
            prod = 0.5 * s * hyp_tr.ratio**4
            try:
                weights = solve_dual_weights(k_tr, p_tr, target[tr], prod)
            except (SolveFailure, NonFiniteWeights):
                scores[f, j] = np.inf
                continue
            res = target[te] - k_model[np.ix_(te, tr)] @ weights
            scores[f, j] = float(res @ p_te @ res) / len(te) ** 2
    return scores.mean(axis=0)


def _fit_bridge(cls, model_rows, critic_rows, target, hyper, proxy_dim, seed, subset_cap):
    n = model_rows.shape[0]
    if n < MIN_ROWS:
        raise TooFewPoints(f"bridge fitting needs at least {MIN_ROWS} rows")
    spec_model, k_model, k_critic = _kernels(model_rows, critic_rows, seed, subset_cap)
    target = np.asarray(target, dtype=float)
    if hyper == "cv":
        scores = cv_scores(k_model, k_critic, target, seed=seed)
        hyper = default_hyper(n, DEFAULT_S_GRID[int(np.argmin(scores))])
    proj = _projection(k_critic, hyper.ratio)
    weights = solve_dual_weights(k_model, proj, target, hyper.prod)
    return cls(weights, model_rows, spec_model, proxy_dim, hyper)


def fit_h(data: Dataset, hyper: MinimaxHyper, seed: int = 0, subset_cap: int = DEFAULT_SUBSET_CAP) -> BridgeH:
    """Fit the outcome bridge with model rows ``(a, w, x)`` and critic rows ``(a, z, x)``."""
    return _fit_bridge(BridgeH, data.awx(), data.azx(), data.y, hyper, data.w.shape[1], seed, subset_cap)


def fit_q_target(data: Dataset, target, hyper: MinimaxHyper, seed: int = 0,
                 subset_cap: int = DEFAULT_SUBSET_CAP) -> BridgeQ:
    """Fit the treatment bridge against an explicit target vector."""
    target = np.asarray(target, dtype=float).ravel()
    if target.shape[0] != data.n:
        raise DimensionMismatch("target length differs from row count")
    return _fit_bridge(BridgeQ, data.azx(), data.awx(), target, hyper, data.z.shape[1], seed, subset_cap)


def fit_q(data: Dataset, policy, hyper: MinimaxHyper, clip_floor: float = DEFAULT_CLIP_FLOOR,
          seed: int = 0, subset_cap: int = DEFAULT_SUBSET_CAP) -> BridgeQ:
    """Fit the treatment bridge; the target is the clipped reciprocal policy density."""
    target = reciprocal_density(policy, data, clip_floor)
    return fit_q_target(data, target, hyper, seed, subset_cap)


def eval_h(model: BridgeH, a: float, w, x=None) -> float:
    return float(model.predict(np.array([a], dtype=float), w, x)[0])


def eval_q(model: BridgeQ, a: float, z, x=None) -> float:
    return float(model.predict(np.array([a], dtype=float), z, x)[0])
