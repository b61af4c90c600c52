import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxkdr.dataset import Dataset
from proxkdr.errors import DegenerateColumn, DimensionMismatch, EmptyGrid, MarginalUnderflow, TooFewPoints
from proxkdr.policy import (
    BandwidthGrid,
    KdePolicy,
    ParametricGaussianPolicy,
    density_at,
    fit_kde_policy,
    fit_parametric_policy,
    policy_from_dict,
    reciprocal_density,
)
from proxkdr.scenarios import generate, oracle_policy, parse_scenario


def independent_data(n=400, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    w = rng.standard_normal((n, 1))
    x = rng.standard_normal((n, 1))
    return Dataset(np.zeros(n), a, np.zeros((n, 1)), w, x)


class ConstantPolicy:
    def __init__(self, value):
        self.value = value

    def density(self, a, w, x=None):
        return np.full(np.atleast_1d(a).shape[0], self.value)


def test_grid_defaults():
    g = BandwidthGrid()
    assert len(g.values) == 20 and g.folds == 3
    assert g.values[0] == pytest.approx(0.1) and g.values[-1] == pytest.approx(10.0)
    assert np.all(np.diff(g.values) > 0)


def test_grid_validation():
    with pytest.raises(EmptyGrid):
        BandwidthGrid(values=())
    with pytest.raises(ValueError):
        BandwidthGrid(values=(1.0, 0.5))


def test_kde_integrates_to_one():
    data = independent_data()
    model = fit_kde_policy(data)
    grid = np.linspace(-5, 5, 2001)
    rng = np.random.default_rng(1)
    for _ in range(5):
        w, x = rng.uniform(-1, 1, 2)
        dens = model.density(grid, np.full(grid.size, w), np.full(grid.size, x))
        assert np.all(dens >= 0)
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=0.02)


def test_kde_selection_is_deterministic():
    data = independent_data(seed=2)
    assert fit_kde_policy(data, seed=4).bandwidth == fit_kde_policy(data, seed=4).bandwidth


def test_duplicated_rows_same_bandwidth():
    data = independent_data(n=150, seed=3)
    doubled = data.take(np.concatenate([np.arange(data.n), np.arange(data.n)]))
    assert fit_kde_policy(doubled, seed=0).bandwidth == fit_kde_policy(doubled, seed=0).bandwidth


def test_kde_needs_rows():
    with pytest.raises(TooFewPoints):
        fit_kde_policy(independent_data(n=20))


def test_kde_degenerate_column():
    d = independent_data(n=50)
    with pytest.raises(DegenerateColumn):
        fit_kde_policy(d.with_columns(w=np.ones((50, 1))))


def test_single_point_kde_formula():
    # with one training point both kernels equal exp(0) at zero offset
    model = KdePolicy(train=np.zeros((1, 2)), bandwidth=0.5, mean=np.zeros(2), scale=np.ones(2))
    expected = 1.0 / (0.5 * np.sqrt(2 * np.pi))
    assert density_at(model, 0.0, [0.0]) == pytest.approx(expected)


def test_symmetric_data_density_at_zero():
    rng = np.random.default_rng(5)
    a = rng.uniform(0.5, 2, 40)
    a = np.concatenate([a, -a])
    w = np.zeros((80, 1)) + rng.standard_normal((1, 1))
    w = w + 1e-3 * np.arange(80)[:, None]
    d = Dataset(np.zeros(80), a, np.zeros((80, 1)), w)
    m1 = fit_kde_policy(d)
    m2 = fit_kde_policy(d.with_columns(a=-a))
    assert density_at(m1, 0.0, w.mean(0)) == pytest.approx(density_at(m2, 0.0, w.mean(0)), rel=1e-9)


def test_marginal_underflow():
    model = fit_kde_policy(independent_data())
    with pytest.raises(MarginalUnderflow):
        density_at(model, 0.0, [1e4], [0.0])


def test_dimension_mismatch():
    model = fit_kde_policy(independent_data())
    with pytest.raises(DimensionMismatch):
        density_at(model, 0.0, [0.0])


def test_parametric_standard_normal():
    model = ParametricGaussianPolicy(weights=np.zeros(3), sigma=1.0)
    assert density_at(model, 0.0, [3.0], [-1.0]) == pytest.approx(0.39894, abs=5e-6)


def test_parametric_fit_recovers_line():
    rng = np.random.default_rng(6)
    w = rng.standard_normal((2000, 1))
    a = 1.0 + 2.0 * w[:, 0] + 0.5 * rng.standard_normal(2000)
    model = fit_parametric_policy(Dataset(np.zeros(2000), a, w, w))
    assert model.weights == pytest.approx([2.0, 1.0], abs=0.05)
    assert model.sigma == pytest.approx(0.5, abs=0.03)


def test_reciprocal_density_values():
    d = independent_data(n=10)
    assert np.allclose(reciprocal_density(ConstantPolicy(0.5), d, 1e-3), 2.0)
    assert np.allclose(reciprocal_density(ConstantPolicy(1e-9), d, 1e-3), 1000.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 0.1), st.floats(1e-4, 0.1), st.floats(0.05, 3.0))
def test_reciprocal_monotone_in_floor(f1, f2, sigma):
    lo, hi = sorted((f1, f2))
    model = ParametricGaussianPolicy(weights=np.array([1.0, 0.0, 0.0]), sigma=sigma)
    d = independent_data(n=60)
    r_lo = reciprocal_density(model, d, lo)
    r_hi = reciprocal_density(model, d, hi)
    assert np.all(r_hi <= r_lo)
    assert np.all(r_hi <= 1.0 / hi + 1e-9)


def test_round_trip_dict():
    model = fit_kde_policy(independent_data(n=60))
    back = policy_from_dict(model.to_dict())
    a = np.linspace(-1, 1, 5)
    w = np.zeros(5)
    assert np.allclose(back.density(a, w, w), model.density(a, w, w))
    par = ParametricGaussianPolicy(weights=np.array([0.5, 1.0]), sigma=2.0)
    assert np.allclose(policy_from_dict(par.to_dict()).density(a, w), par.density(a, w))


def test_kde_tracks_exact_law_on_hu1():
    spec = parse_scenario("hu1", n=2000, seed=0)
    data = generate(spec).observed
    model = fit_kde_policy(data)
    exact = oracle_policy(spec)
    w0 = float(np.median(data.w))
    a_pts = np.linspace(5.5, 7.0, 7)[1:-1]
    est = model.density(a_pts, np.full(5, w0))
    ref = exact.density(a_pts, np.full(5, w0))
    assert np.all(np.abs(est / ref - 1) <= 0.25)
