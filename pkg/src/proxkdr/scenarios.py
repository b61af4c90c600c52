"""Seeded synthetic designs, misspecification transforms and Monte Carlo truth.

Families
--------
lowdim
    Two-dimensional uniform confounder with proxies ``W``, ``Z`` in R^2 and a
    cosine outcome. ``scenario`` 1-4 selects which bridge is misspecified at
    estimation time (none, outcome, treatment, both).
highdim
    Correlated Gaussian covariates (dim 100), proxies of dimension 10 each,
    truncated-logistic treatment and quadratic dose-response.
hu
    Gaussian confounder designs 1-3 with parabolic, sigmoidal and
    exponential outcome laws.
timeseries
    Stationary AR(1) confounder; lagged outcome and lead treatment serve as
    proxies.

All ``N(mu, v)`` laws below use ``v`` as the variance.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm, qmc

from .dataset import Dataset
from .errors import InvalidSpec
from .policy import ParametricGaussianPolicy

FAMILIES = {"lowdim": 1, "highdim": 2, "hu": 3, "timeseries": 4}
MISSPEC = ("none", "w_star", "z_star", "both")
DEFAULT_TRUTH_REPS = 10_000

_LOWDIM_MISSPEC = {1: "none", 2: "w_star", 3: "z_star", 4: "both"}
_SUPPORT = {
    ("lowdim", None): (-1.0, 2.0),
    ("highdim", None): (0.0, 1.0),
    ("hu", 1): (5.5, 7.0),
    ("hu", 2): (4.0, 5.5),
    ("hu", 3): (5.5, 7.0),
    ("timeseries", None): (-2.0, 2.0),
}
# hu designs: treatment intercept and outcome noise variance
_HU_A_INTERCEPT = {1: 2.5, 2: 1.0, 3: 2.5}
_HU_Y_VAR = {1: 0.2, 2: 0.05, 3: 0.2}
_HU_U_MEAN, _HU_VAR = 1.0, 0.2


@dataclass(frozen=True)
class ScenarioSpec:
    family: str
    n: int
    seed: int = 0
    scenario: int = 1
    replication: int = 0
    dim_x: int = 100
    dim_z: int = 10
    dim_w: int = 10
    xi: float = 0.8
    eta: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown scenario family {self.family!r}")
        if self.n < 1:
            raise InvalidSpec("n must be at least 1")
        if self.family == "lowdim" and self.scenario not in (1, 2, 3, 4):
            raise InvalidSpec("lowdim scenario must be 1..4")
        if self.family == "hu" and self.scenario not in (1, 2, 3):
            raise InvalidSpec("hu scenario must be 1..3")
        if self.family == "timeseries" and not abs(self.xi) < 1:
            raise InvalidSpec("AR coefficient must satisfy |xi| < 1")
        if self.family == "highdim" and min(self.dim_x, self.dim_z, self.dim_w) < 1:
            raise InvalidSpec("high-dimensional blocks need at least one column")

    @property
    def key(self) -> str:
        """Short identifier, e.g. ``lowdim1`` or ``hu3``."""
        if self.family in ("lowdim", "hu"):
            return f"{self.family}{self.scenario}"
        return self.family

    def with_(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)


def parse_scenario(name: str, n: int = 1000, seed: int = 0, **extra) -> ScenarioSpec:
    """Build a spec from ids such as ``lowdim2``, ``hu1``, ``highdim``, ``timeseries``."""
    name = name.strip().lower()
    for family in FAMILIES:
        if name.startswith(family):
            rest = name[len(family):]
            if rest and not rest.isdigit():
                break
            scenario = int(rest) if rest else 1
            return ScenarioSpec(family=family, n=n, seed=seed, scenario=scenario, **extra)
    raise InvalidSpec(f"unknown scenario id {name!r}")


@dataclass(frozen=True, eq=False)
class SimDataset:
    """Observed sample plus the latent confounders, kept apart."""

    observed: Dataset
    latents: dict = field(default_factory=dict)


def _rng(spec: ScenarioSpec, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence([spec.seed, FAMILIES[spec.family], spec.scenario, spec.replication, stream])
    return np.random.Generator(np.random.Philox(ss))


def support(spec: ScenarioSpec) -> tuple[float, float]:
    key = (spec.family, spec.scenario if spec.family == "hu" else None)
    return _SUPPORT[key]


def misspec_for(spec: ScenarioSpec) -> str:
    """Default misspecification transform of a scenario."""
    if spec.family == "lowdim":
        return _LOWDIM_MISSPEC[spec.scenario]
    return "none"


def _quad_decay(k: int) -> np.ndarray:
    return 1.0 / np.arange(1, k + 1) ** 2


def _tridiag_cov(k: int) -> np.ndarray:
    return np.eye(k) + 0.5 * (np.eye(k, k=1) + np.eye(k, k=-1))


def _truncated_logistic(t):
    return 0.8 / (1.0 + np.exp(-t)) + 0.1


def _gen_lowdim(spec, rng):
    n = spec.n
    u2 = rng.uniform(-1.0, 2.0, n)
    u1 = rng.uniform(0.0, 1.0, n) - ((u2 >= 0.0) & (u2 <= 1.0))
    eps = rng.standard_normal((n, 4))
    w = np.column_stack([u1 + rng.uniform(-1.0, 1.0, n), u2 + eps[:, 0]])
    z = np.column_stack([u1 + eps[:, 1], u2 + rng.uniform(-1.0, 1.0, n)])
    a = u2 + eps[:, 2]
    y = 3.0 * np.cos(2.0 * (0.3 * u1 + 0.3 * u2 + 0.2) + 1.5 * a) + eps[:, 3]
    return Dataset(y, a, z, w), {"u1": u1, "u2": u2}


def _gen_highdim(spec, rng):
    n, px, pz, pw = spec.n, spec.dim_x, spec.dim_z, spec.dim_w
    eps = rng.standard_normal((n, 3))
    u_z = eps[:, 0] + eps[:, 2]
    u_w = eps[:, 1] + eps[:, 2]
    z = rng.uniform(-1.0, 1.0, (n, pz)) + 0.25 * u_z[:, None]
    w = rng.uniform(-1.0, 1.0, (n, pw)) + 0.25 * u_w[:, None]
    x = rng.standard_normal((n, px)) @ np.linalg.cholesky(_tridiag_cov(px)).T
    bx, bz, bw = _quad_decay(px), _quad_decay(pz), _quad_decay(pw)
    a = _truncated_logistic(3.0 * x @ bx + 3.0 * z @ bz) + 0.25 * u_w
    y = a**2 + 1.2 * a + 1.2 * (x @ bx + w @ bw) + a * x[:, 0] + 0.25 * u_z
    return Dataset(y, a, z, w, x), {"u_z": u_z, "u_w": u_w}


def _hu_outcome_mean(scenario: int, a, u):
    if scenario == 1:
        return -10.0 + 2.2 * (a - 6.0) ** 2 + 4.0 * u
    if scenario == 2:
        t = a - 5.0
        return 1.5 + np.where(t >= 0, 1.0, -1.0) * np.sqrt(np.abs(t)) + 1.7 * u
    return -2.0 * np.exp(-1.4 * (a - 6.0)) + 0.8 * np.exp(u)


def _gen_hu(spec, rng):
    n, s = spec.n, spec.scenario
    sd = np.sqrt(_HU_VAR)
    u = _HU_U_MEAN + sd * rng.standard_normal(n)
    w = 1.0 - 2.0 * u + sd * rng.standard_normal(n)
    z = -1.0 + 1.5 * u + sd * rng.standard_normal(n)
    a = _HU_A_INTERCEPT[s] + 4.0 * u + sd * rng.standard_normal(n)
    y = _hu_outcome_mean(s, a, u) + np.sqrt(_HU_Y_VAR[s]) * rng.standard_normal(n)
    return Dataset(y, a, z, w), {"u": u}


def _gen_timeseries(spec, rng):
    n, xi, eta = spec.n, spec.xi, spec.eta
    m = n + 2
    eps = rng.standard_normal((m, 4))
    u = np.empty(m)
    u[0] = eps[0, 0]
    innov = np.sqrt(1.0 - xi * xi)
    for i in range(1, m):
        u[i] = xi * u[i - 1] + innov * eps[i, 0]
    v = 0.6 * u + eps[:, 1]
    a = 0.4 + 1.5 * v + eta * u + eps[:, 2]
    y = 0.5 + 0.7 * a + 1.5 * v + 0.9 * u + eps[:, 3]
    mid = slice(1, m - 1)
    data = Dataset(y[mid], a[mid], z=a[2:], w=y[:-2], x=v[mid])
    return data, {"u": u[mid]}


_GENERATORS = {
    "lowdim": _gen_lowdim,
    "highdim": _gen_highdim,
    "hu": _gen_hu,
    "timeseries": _gen_timeseries,
}


def generate(spec: ScenarioSpec) -> SimDataset:
    """Draw one dataset; identical specs give identical data."""
    data, latents = _GENERATORS[spec.family](spec, _rng(spec, 0))
    return SimDataset(observed=data, latents=latents)


def _root_plus_one(v):
    return np.sqrt(np.abs(v)) + 1.0


def apply_misspec(data: Dataset, target: str) -> Dataset:
    """Replace proxies by ``|v|^(1/2) + 1``: ``w_star``, ``z_star``, ``both`` or ``none``."""
    if target not in MISSPEC:
        raise InvalidSpec(f"unknown misspecification {target!r}")
    if target == "none":
        return data
    blocks = {}
    if target in ("w_star", "both"):
        blocks["w"] = _root_plus_one(data.w)
    if target in ("z_star", "both"):
        blocks["z"] = _root_plus_one(data.z)
    return data.with_columns(**blocks)


def _uniforms(spec: ScenarioSpec, reps: int, dim: int) -> np.ndarray:
    rng = _rng(spec, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two sample size
        u = qmc.Sobol(dim, scramble=True, seed=rng).random(reps)
    # keep inverse-CDF transforms finite
    return np.clip(u, 1e-12, 1.0 - 1e-12)


def _truth_lowdim(spec, grid, reps):
    u = _uniforms(spec, reps, 2)
    u2 = -1.0 + 3.0 * u[:, 0]
    u1 = u[:, 1] - ((u2 >= 0.0) & (u2 <= 1.0))
    phase = 0.6 * u1 + 0.6 * u2 + 0.4
    return np.array([3.0 * np.mean(np.cos(phase + 1.5 * a)) for a in grid])


def _truth_highdim(spec, grid, reps):
    px, pz, pw = spec.dim_x, spec.dim_z, spec.dim_w
    u = _uniforms(spec, reps, px + pw + 3)
    g = norm.ppf(u)
    x = g[:, :px] @ np.linalg.cholesky(_tridiag_cov(px)).T
    e = g[:, px:px + 3]
    u_z = e[:, 0] + e[:, 2]
    u_w = e[:, 1] + e[:, 2]
    nu_w = 2.0 * u[:, px + 3:] - 1.0
    w = nu_w + 0.25 * u_w[:, None]
    base = 1.2 * (x @ _quad_decay(px) + w @ _quad_decay(pw)) + 0.25 * u_z
    return np.array([a**2 + 1.2 * a + np.mean(base + a * x[:, 0]) for a in grid])


def _truth_hu(spec, grid, reps):
    u = _HU_U_MEAN + np.sqrt(_HU_VAR) * norm.ppf(_uniforms(spec, reps, 1)[:, 0])
    return np.array([np.mean(_hu_outcome_mean(spec.scenario, a, u)) for a in grid])


def _truth_timeseries(spec, grid, reps):
    g = norm.ppf(_uniforms(spec, reps, 2))
    u = g[:, 0]
    v = 0.6 * u + g[:, 1]
    base = 0.5 + 1.5 * v + 0.9 * u
    return np.array([0.7 * a + np.mean(base) for a in grid])


_TRUTH = {
    "lowdim": _truth_lowdim,
    "highdim": _truth_highdim,
    "hu": _truth_hu,
    "timeseries": _truth_timeseries,
}


def ground_truth_mc(spec: ScenarioSpec, grid, reps: int = DEFAULT_TRUTH_REPS) -> np.ndarray:
    """Monte Carlo estimate of ``E[Y(a)]`` at each grid value.

    The latent and covariate system is simulated ``reps`` times (scrambled
    Sobol draws mapped through inverse CDFs, shared across grid values) with
    the treatment forced to ``a``. Exogenous zero-mean outcome noise is
    integrated out analytically.
    """
    if reps < 1:
        raise InvalidSpec("reps must be at least 1")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return _TRUTH[spec.family](spec, grid, reps)


def oracle_policy(spec: ScenarioSpec) -> ParametricGaussianPolicy:
    """Exact conditional law of ``A`` given ``W`` for the Gaussian ``hu`` designs.

    With ``U ~ N(1, .2)``, ``W = 1 - 2U + e`` and ``A = c + 4U + e'`` the pair
    is jointly Gaussian, giving ``A | W ~ N(c + 4 E[U|W], 16 Var(U|W) + .2)``.
    """
    if spec.family != "hu":
        raise InvalidSpec("an oracle policy is only available for the hu designs")
    var_u, var_e = _HU_VAR, _HU_VAR
    mean_w = 1.0 - 2.0 * _HU_U_MEAN
    var_w = 4.0 * var_u + var_e
    cov_uw = -2.0 * var_u
    slope_u = cov_uw / var_w
    var_u_given_w = var_u - cov_uw**2 / var_w
    intercept = _HU_A_INTERCEPT[spec.scenario]
    # E[A|W] = intercept + 4 (mu_u + slope_u (W - mean_w))
    weight = 4.0 * slope_u
    const = intercept + 4.0 * (_HU_U_MEAN - slope_u * mean_w)
    sigma = float(np.sqrt(16.0 * var_u_given_w + var_e))
    return ParametricGaussianPolicy(weights=np.array([weight, const]), sigma=sigma)
