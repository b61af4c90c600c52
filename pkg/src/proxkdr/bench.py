"""Replicated simulation experiments and cMSE tables."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bridges import default_hyper, fit_h, fit_q
from .dataset import Dataset
from .errors import InvalidSpec, LengthMismatch, ProxKdrError
from .estimators import METHODS, AteCurve, BridgeEvaluations, SmoothingConfig, make_grid
from .policy import DEFAULT_CLIP_FLOOR, fit_kde_policy, fit_parametric_policy
from .scenarios import (
    DEFAULT_TRUTH_REPS,
    MISSPEC,
    ScenarioSpec,
    apply_misspec,
    generate,
    ground_truth_mc,
    misspec_for,
    oracle_policy,
    parse_scenario,
    support,
)

log = logging.getLogger(__name__)

DEFAULT_C_VALUES = tuple(np.round(np.arange(0.5, 4.01, 0.5), 10))
POLICY_KINDS = ("kde", "parametric", "oracle")
GRID_POINTS = 100


def cmse(curve, truth) -> float:
    """Mean squared gap between an estimated curve and the true one."""
    est = curve.estimates if isinstance(curve, AteCurve) else np.asarray(curve, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if est.shape != truth.shape:
        raise LengthMismatch(f"curve has {est.size} points, truth has {truth.size}")
    if est.size == 0:
        raise LengthMismatch("empty curve")
    return float(np.mean((est - truth) ** 2))


@dataclass(frozen=True)
class BenchConfig:
    """One experiment.

    ``misspec``, ``grid`` and ``policy_kind`` default to the scenario's own
    choices (its misspecification, ``GRID_POINTS`` points over the treatment
    support, parametric policy for ``highdim`` and KDE elsewhere).
    ``s`` is the stabiliser multiplier or ``"cv"`` for fold-wise selection.
    """

    scenario: ScenarioSpec
    methods: tuple = METHODS
    misspec: str | None = None
    replications: int = 20
    c_values: tuple = DEFAULT_C_VALUES
    grid: tuple | None = None
    policy_kind: str | None = None
    base_seed: int = 0
    s: float | str = 1.0
    truth_reps: int = DEFAULT_TRUTH_REPS
    clip_floor: float = DEFAULT_CLIP_FLOOR
    cache_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidSpec("replications must be at least 1")
        methods = tuple(self.methods)
        if not methods or any(m not in METHODS for m in methods):
            raise InvalidSpec(f"methods must be drawn from {METHODS}")
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in methods))
        if any(not c > 0 for c in self.c_values) or not len(self.c_values):
            raise InvalidSpec("c_values must be positive and non-empty")
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        if self.misspec is None:
            object.__setattr__(self, "misspec", misspec_for(self.scenario))
        if self.misspec not in MISSPEC:
            raise InvalidSpec(f"misspec must be one of {MISSPEC}")
        if self.grid is None:
            object.__setattr__(self, "grid", (*support(self.scenario), GRID_POINTS))
        a_min, a_max, count = self.grid
        if int(count) < 1:
            raise InvalidSpec("grid count must be at least 1")
        object.__setattr__(self, "grid", (float(a_min), float(a_max), int(count)))
        if self.policy_kind is None:
            kind = "parametric" if self.scenario.family == "highdim" else "kde"
            object.__setattr__(self, "policy_kind", kind)
        if self.policy_kind not in POLICY_KINDS:
            raise InvalidSpec(f"policy_kind must be one of {POLICY_KINDS}")
        if not (self.s == "cv" or (isinstance(self.s, (int, float)) and self.s > 0)):
            raise InvalidSpec("s must be positive or 'cv'")

    def grid_values(self) -> np.ndarray:
        return make_grid(*self.grid)

    def replication_spec(self, r: int) -> ScenarioSpec:
        return self.scenario.with_(seed=self.base_seed, replication=r)

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchConfig":
        """Build from a parsed config mapping with a nested ``scenario`` section."""
        doc = dict(doc)
        scen = doc.pop("scenario")
        if isinstance(scen, str):
            scen = {"id": scen}
        scen = dict(scen)
        spec = parse_scenario(scen.pop("id"), n=int(scen.pop("n", 1000)), seed=int(doc.get("base_seed", 0)), **scen)
        known = {f for f in cls.__dataclass_fields__ if f != "scenario"}
        unknown = set(doc) - known
        if unknown:
            raise InvalidSpec(f"unknown config keys {sorted(unknown)}")
        for key in ("methods", "c_values", "grid"):
            if key in doc and doc[key] is not None:
                doc[key] = tuple(doc[key])
        return cls(scenario=spec, **doc)


def estimation_views(data: Dataset, misspec: str):
    """Data seen by the outcome bridge, the treatment side and the estimators.

    The outcome bridge sees the transformed ``W`` only, the treatment bridge
    and policy see the transformed ``Z`` only, and the final averages use
    every transform in force.
    """
    h_view = apply_misspec(data, "w_star" if misspec in ("w_star", "both") else "none")
    q_view = apply_misspec(data, "z_star" if misspec in ("z_star", "both") else "none")
    return h_view, q_view, apply_misspec(data, misspec)


def fit_policy(kind: str, data: Dataset, spec: ScenarioSpec, seed: int = 0):
    if kind == "kde":
        return fit_kde_policy(data, seed=seed)
    if kind == "parametric":
        return fit_parametric_policy(data)
    if kind == "oracle":
        return oracle_policy(spec)
    raise InvalidSpec(f"unknown policy kind {kind!r}")


def replication_evaluations(config: BenchConfig, r: int, grid=None) -> tuple[BridgeEvaluations, Dataset]:
    """Fit every nuisance for replication ``r`` and evaluate the bridges on the grid."""
    spec = config.replication_spec(r)
    grid = config.grid_values() if grid is None else grid
    data = generate(spec).observed
    h_view, q_view, eval_view = estimation_views(data, config.misspec)
    hyper = "cv" if config.s == "cv" else default_hyper(data.n, float(config.s))
    need_h = any(m in ("por", "pkdr") for m in config.methods)
    need_q = any(m in ("pkipw", "pkdr") for m in config.methods)
    h = fit_h(h_view, hyper, seed=config.base_seed) if need_h else None
    q = None
    if need_q:
        policy = fit_policy(config.policy_kind, q_view, spec, seed=config.base_seed)
        q = fit_q(q_view, policy, hyper, clip_floor=config.clip_floor, seed=config.base_seed)
    return BridgeEvaluations.build(eval_view, grid, h=h, q=q), data


def _curves(config: BenchConfig, evals: BridgeEvaluations, data: Dataset) -> dict:
    out = {}
    sigma = float(np.std(data.a, ddof=1))
    for method in config.methods:
        if method == "por":
            out[("por", None)] = evals.por()
            continue
        for c in config.c_values:
            h_bw = SmoothingConfig.from_parts(c, sigma, data.n).h_bw
            out[(method, c)] = evals.estimate(method, h_bw)
    return out


def _run_one(args):
    config, r, grid, truth = args
    try:
        evals, data = replication_evaluations(config, r, grid)
        curves = _curves(config, evals, data)
    except (ProxKdrError, np.linalg.LinAlgError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}"
    scores = {key: cmse(curve, truth) for key, curve in curves.items()}
    bad = [k for k, v in scores.items() if not np.isfinite(v)]
    if bad:
        return r, None, f"non-finite cMSE for {bad}"
    return r, (scores, curves), None


@dataclass
class CmseTable:
    """cMSE of every (method, c) cell across replications.

    ``raw[key]`` lists the per-replication values of the successful
    replications (in replication order); POR cells use ``c = None``.
    ``curves[key]`` is the mean estimated curve over those replications.
    """

    config: BenchConfig
    grid: np.ndarray
    truth: np.ndarray
    raw: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    replications: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def keys(self):
        return list(self.raw)

    def mean(self, method: str, c: float | None = None) -> float:
        return float(np.mean(self.raw[self._key(method, c)]))

    def std(self, method: str, c: float | None = None) -> float:
        return float(np.std(self.raw[self._key(method, c)]))

    def _key(self, method, c):
        if method == "por":
            return ("por", None)
        if c is None:
            raise ValueError(f"method {method!r} needs a c value")
        for key in self.raw:
            if key[0] == method and key[1] is not None and np.isclose(key[1], c, rtol=0, atol=1e-12):
                return key
        raise KeyError((method, c))

    def profile(self, method: str) -> list[tuple[float, float]]:
        """``(c, mean cMSE)`` for a smoothed method, in config order."""
        return [(c, self.mean(method, c)) for c in self.config.c_values]

    def best_c(self, method: str) -> float:
        prof = self.profile(method)
        return prof[int(np.argmin([m for _, m in prof]))][0]

    def best(self, method: str) -> float:
        if method == "por":
            return self.mean("por")
        return self.mean(method, self.best_c(method))

    def rows(self) -> list[dict]:
        out = []
        for (method, c), vals in self.raw.items():
            out.append({
                "method": method,
                "c": c,
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
                "n_ok": len(vals),
                "n_failed": len(self.failures),
            })
        return out

    def to_csv(self, path, precision: int = 12) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "c", "mean", "std", "n_ok", "n_failed"])
            for row in self.rows():
                c = "" if row["c"] is None else f"{row['c']:.{precision}e}"
                writer.writerow([row["method"], c, f"{row['mean']:.{precision}e}",
                                 f"{row['std']:.{precision}e}", row["n_ok"], row["n_failed"]])

    def to_json(self, path=None, precision: int = 12) -> str:
        def r(v):
            return float(f"{v:.{precision}e}")

        doc = {
            "scenario": asdict(self.config.scenario),
            "misspec": self.config.misspec,
            "policy_kind": self.config.policy_kind,
            "s": self.config.s,
            "replications": self.replications,
            "failures": self.failures,
            "cells": [
                {**row, "mean": r(row["mean"]), "std": r(row["std"]),
                 "raw": [r(v) for v in self.raw[(row["method"], row["c"])]]}
                for row in self.rows()
            ],
            "best_c": {m: self.best_c(m) for m in self.config.methods if m != "por" and self.raw},
        }
        if self.config.policy_kind == "parametric" and self.config.scenario.family == "highdim":
            doc["note"] = "parametric Gaussian policy used in place of a flow-based density estimator"
        text = json.dumps(doc, indent=1)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def write_curves(self, path, precision: int = 12) -> None:
        from .io import save_curve_csv

        cols = {"truth": self.truth}
        for (method, c), curve in self.curves.items():
            cols[method if c is None else f"{method}_c{c:g}"] = curve
        save_curve_csv(path, self.grid, cols, precision)


def _truth_key(spec: ScenarioSpec, grid: np.ndarray, reps: int) -> str:
    fields = asdict(spec)
    fields.pop("n")
    fields.pop("replication")
    payload = json.dumps({"spec": fields, "reps": reps}, sort_keys=True).encode() + grid.tobytes()
    return hashlib.sha256(payload).hexdigest()[:24]


def cached_truth(spec: ScenarioSpec, grid, reps: int = DEFAULT_TRUTH_REPS, cache_dir=None) -> np.ndarray:
    """Ground truth on ``grid``, stored under ``cache_dir`` keyed by a content hash."""
    grid = np.ascontiguousarray(grid, dtype=float)
    spec = spec.with_(replication=0)
    if cache_dir is None:
        return ground_truth_mc(spec, grid, reps)
    path = Path(cache_dir) / f"truth-{_truth_key(spec, grid, reps)}.npy"
    if path.exists():
        return np.load(path)
    truth = ground_truth_mc(spec, grid, reps)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, truth)
    return truth


def run_bench(config: BenchConfig, truth=None) -> CmseTable:
    """Run all replications of ``config``.

    ``truth`` overrides the Monte Carlo ground truth. Replications that hit
    a solver or data error are logged and left out of the aggregates.
    """
    grid = config.grid_values()
    if truth is None:
        truth = cached_truth(config.replication_spec(0), grid, config.truth_reps, config.cache_dir)
    truth = np.asarray(truth, dtype=float).ravel()
    if truth.shape != grid.shape:
        raise LengthMismatch("truth length differs from the grid")
    jobs = [(config, r, grid, truth) for r in range(config.replications)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    results.sort(key=lambda t: t[0])

    table = CmseTable(config=config, grid=grid, truth=truth)
    sums: dict = {}
    for r, payload, err in results:
        if payload is None:
            log.warning("replication %d failed: %s", r, err)
            table.failures.append({"replication": r, "error": err})
            continue
        scores, curves = payload
        table.replications.append(r)
        for key, value in scores.items():
            table.raw.setdefault(key, []).append(value)
            sums[key] = sums.get(key, 0.0) + curves[key]
    for key, total in sums.items():
        table.curves[key] = total / len(table.replications)
    return table


def sensitivity_sweep(config: BenchConfig, method: str = "pkdr", table: CmseTable | None = None) -> list[tuple[float, float]]:
    """Mean cMSE against the smoothing constant ``c``.

    Every ``c`` reuses the same fitted bridges, so one bench run covers the
    whole sweep; pass ``table`` to reuse an existing run.
    """
    if method == "por":
        raise ValueError("POR has no smoothing constant")
    if table is None:
        table = run_bench(BenchConfig(**{**_fields(config), "methods": (method,)}))
    return table.profile(method)


def _fields(config: BenchConfig) -> dict:
    return {name: getattr(config, name) for name in config.__dataclass_fields__}


def reference_grid(spec: ScenarioSpec, points: int = 5) -> np.ndarray:
    """``points`` equally spaced interior values of the treatment support."""
    lo, hi = support(spec)
    return lo + (hi - lo) * np.arange(1, points + 1) / (points + 1)


@dataclass
class RateResult:
    n_values: tuple
    errors: dict  # n -> per-replication mean absolute error
    failures: dict

    def mean(self, n: int) -> float:
        return float(np.mean(self.errors[n]))

    def median(self, n: int) -> float:
        return float(np.median(self.errors[n]))

    def series(self) -> list[tuple[int, float, float]]:
        return [(n, self.mean(n), self.median(n)) for n in self.n_values]


def rate_study(spec: ScenarioSpec, n_values, policy_kind: str = "oracle", replications: int = 20,
               c: float = 1.5, method: str = "pkdr", base_seed: int = 0, s: float | str = 1.0,
               truth_reps: int = DEFAULT_TRUTH_REPS, cache_dir=None, workers: int = 1) -> RateResult:
    """Absolute estimator error against sample size.

    For each ``n`` and replication the error is the mean of
    ``|estimate(a) - truth(a)|`` over ``reference_grid(spec)``.
    """
    n_values = tuple(int(n) for n in n_values)
    if not n_values or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise InvalidSpec("n_values must be non-empty and strictly increasing")
    ref = reference_grid(spec)
    grid = (float(ref[0]), float(ref[-1]), len(ref))
    truth = cached_truth(spec.with_(seed=base_seed), ref, truth_reps, cache_dir)
    errors, failures = {}, {}
    for n in n_values:
        config = BenchConfig(
            scenario=spec.with_(n=n), methods=(method,), misspec="none", replications=replications,
            c_values=(c,), grid=grid, policy_kind=policy_kind, base_seed=base_seed, s=s,
            truth_reps=truth_reps, cache_dir=cache_dir, workers=workers,
        )
        jobs = [(config, r, ref, truth) for r in range(replications)]
        errs = []
        for r, payload, err in map(_run_one, jobs) if workers <= 1 else _pool_map(jobs, workers):
            if payload is None:
                failures.setdefault(n, []).append({"replication": r, "error": err})
                continue
            curve = next(iter(payload[1].values()))
            errs.append(float(np.mean(np.abs(curve - truth))))
        errors[n] = np.asarray(errs)
    return RateResult(n_values=n_values, errors=errors, failures=failures)


def _pool_map(jobs, workers):
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return sorted(pool.map(_run_one, jobs), key=lambda t: t[0])
