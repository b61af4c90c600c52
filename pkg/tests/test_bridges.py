import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxkdr.bridges import (
    BridgeH,
    BridgeQ,
    MinimaxHyper,
    critic_projection,
    default_hyper,
    eval_h,
    eval_q,
    fit_h,
    fit_q,
    fit_q_target,
    inner_max_value,
    solve_dual_weights,
)
from proxkdr.dataset import Dataset
from proxkdr.errors import DimensionMismatch, NonFiniteWeights, TooFewPoints
from proxkdr.kernel_algebra import KernelSpec, gram_matrix, median_heuristic
from proxkdr.scenarios import generate, oracle_policy, parse_scenario
from proxkdr.policy import reciprocal_density


def brute_force_inner_max(psi, k, ratio, gamma):
    """Maximise psi' K c - c' ((lambda/n) K^2 + gamma K) c over c.

    ``lambda = ratio * gamma``; the first-order condition is solved by least
    squares so singular ``K`` is handled.
    """
    n = k.shape[0]
    lam = ratio * gamma
    quad = (lam / n) * k @ k + gamma * k
    c, *_ = np.linalg.lstsq(2 * quad, k @ psi, rcond=None)
    return float(psi @ k @ c - c @ quad @ c)


def toy_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(n)
    z = u + 0.5 * rng.standard_normal(n)
    w = u + 0.5 * rng.standard_normal(n)
    a = u + rng.standard_normal(n)
    y = np.sin(a) + u + 0.1 * rng.standard_normal(n)
    return Dataset(y, a, z, w)


class TestHyper:
    def test_defaults_at_1000(self):
        h = default_hyper(1000)
        assert h.ratio == pytest.approx(0.315479, abs=5e-7)
        assert h.prod == pytest.approx(0.5 * (5 / 1000**0.4) ** 4, rel=1e-14)
        assert h.prod == pytest.approx(0.0049528, abs=5e-8)

    def test_n_one(self):
        h = default_hyper(1, s=3.0)
        assert h.ratio == pytest.approx(5.0)
        assert h.prod == pytest.approx(1.5 * 625)

    def test_ratio_decreasing(self):
        ratios = [default_hyper(n).ratio for n in (1, 2, 10, 100, 5000)]
        assert np.all(np.diff(ratios) < 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            MinimaxHyper(ratio=-1.0, prod=1.0)


class TestInnerMax:
    def test_zero(self):
        k = gram_matrix(np.arange(5.0), np.arange(5.0), KernelSpec(0.5))
        assert inner_max_value(np.zeros(5), k, 0.3, 2.0) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 20), st.integers(0, 10_000))
    def test_nonnegative(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, 2))
        k = gram_matrix(x, x, KernelSpec(0.7))
        assert inner_max_value(rng.standard_normal(n), k, 0.4, 1.3) >= 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force_n10(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((10, 2))
        k = gram_matrix(x, x, KernelSpec(0.5))
        psi = rng.standard_normal(10)
        ratio, gamma = rng.uniform(0.1, 2.0), rng.uniform(0.1, 3.0)
        ref = brute_force_inner_max(psi, k, ratio, gamma)
        assert inner_max_value(psi, k, ratio, gamma) == pytest.approx(ref, rel=1e-6)


class TestFitH:
    def test_zero_outcome(self):
        d = toy_data()
        h = fit_h(d.with_columns(y=np.zeros(d.n)), default_hyper(d.n))
        assert np.all(h.alpha == 0)
        assert np.all(h.predict(d.a, d.w) == 0)

    def test_homogeneity(self):
        d = toy_data()
        hyp = default_hyper(d.n)
        h1 = fit_h(d, hyp)
        h2 = fit_h(d.with_columns(y=2 * d.y), hyp)
        assert np.allclose(h2.alpha, 2 * h1.alpha, rtol=1e-10, atol=1e-12)

    def test_additivity(self):
        d = toy_data()
        hyp = default_hyper(d.n)
        y2 = np.cos(d.a)
        a1 = fit_h(d, hyp).alpha
        a2 = fit_h(d.with_columns(y=y2), hyp).alpha
        a12 = fit_h(d.with_columns(y=d.y + y2), hyp).alpha
        assert np.allclose(a12, a1 + a2, rtol=1e-8, atol=1e-10 * np.abs(a12).max())

    def test_too_few_rows(self):
        with pytest.raises(TooFewPoints):
            fit_h(toy_data(n=9), default_hyper(9))

    def test_deterministic(self):
        d = toy_data()
        hyp = default_hyper(d.n)
        assert np.array_equal(fit_h(d, hyp).alpha, fit_h(d, hyp).alpha)

    def test_no_confounding_reduces_to_regression(self):
        rng = np.random.default_rng(11)
        n = 500
        a = rng.uniform(-2, 2, n)
        w = rng.standard_normal(n)
        y = np.sin(a) + w
        # critic sees (a, z) with z = w, so the moment restriction is a regression on (a, w)
        d = Dataset(y, a, w, w)
        h = fit_h(d, default_hyper(n))
        rmse = float(np.sqrt(np.mean((h.predict(a, w) - y) ** 2)))
        k = gram_matrix(d.awx(), d.awx(), h.kernel)
        interp = np.linalg.lstsq(k, y, rcond=None)[0]
        base = float(np.sqrt(np.mean((k @ interp - y) ** 2)))
        assert rmse <= base + 0.1
        assert rmse <= 0.15

    def test_interpolation_limit(self):
        # fit_h refuses n < 10, so the closed form is driven directly
        rng = np.random.default_rng(12)
        rows = np.column_stack([np.linspace(-2, 2, 8), rng.standard_normal(8)])
        y = rng.standard_normal(8)
        k = gram_matrix(rows, rows, KernelSpec(median_heuristic(rows)))
        proj = critic_projection(k, 1e-10)
        alpha = solve_dual_weights(k, proj, y, 1e-14)
        assert np.max(np.abs(k @ alpha - y)) <= 1e-3


class TestFitQ:
    def test_zero_target(self):
        d = toy_data()
        q = fit_q_target(d, np.zeros(d.n), default_hyper(d.n))
        assert np.all(q.beta == 0)

    def test_homogeneity(self):
        d = toy_data()
        hyp = default_hyper(d.n)
        r = np.exp(d.a)
        b1 = fit_q_target(d, r, hyp).beta
        b3 = fit_q_target(d, 3 * r, hyp).beta
        assert np.allclose(b3, 3 * b1, rtol=1e-10, atol=1e-12)

    def test_target_length(self):
        with pytest.raises(DimensionMismatch):
            fit_q_target(toy_data(), np.ones(3), default_hyper(60))

    @pytest.mark.xfail(strict=True, reason="heavy-tailed reciprocal density target; bin means have standard errors of several units")
    def test_binned_moment_on_hu1(self):
        spec = parse_scenario("hu1", n=1000, seed=0)
        d = generate(spec).observed
        policy = oracle_policy(spec)
        q = fit_q(d, policy, default_hyper(d.n))
        r = reciprocal_density(policy, d)
        resid = q.predict(d.a, d.z) - r
        # 5 treatment quintiles crossed with the two halves of w
        a_bin = np.clip(np.searchsorted(np.quantile(d.a, np.linspace(0, 1, 6)), d.a, side="right") - 1, 0, 4)
        w_bin = (d.w[:, 0] > np.median(d.w)).astype(int)
        bins = 2 * a_bin + w_bin
        means = np.array([resid[bins == b].mean() for b in range(10)])
        assert np.all(np.abs(means) <= 0.5)


class TestEval:
    def _bridge(self, cls, weights, train):
        return cls(np.asarray(weights, float), np.asarray(train, float), KernelSpec(0.5), 1)

    @pytest.mark.parametrize("cls, fn", [(BridgeH, eval_h), (BridgeQ, eval_q)])
    def test_zero_weights(self, cls, fn):
        b = self._bridge(cls, np.zeros(3), np.random.default_rng(0).standard_normal((3, 2)))
        assert fn(b, 0.3, [1.0]) == 0.0

    @pytest.mark.parametrize("cls, fn", [(BridgeH, eval_h), (BridgeQ, eval_q)])
    def test_single_point(self, cls, fn):
        b = self._bridge(cls, [1.0], [[0.2, -0.4]])
        assert fn(b, 0.2, [-0.4]) == pytest.approx(1.0)

    @pytest.mark.parametrize("cls, fn", [(BridgeH, eval_h), (BridgeQ, eval_q)])
    def test_permutation(self, cls, fn):
        rng = np.random.default_rng(1)
        train = rng.standard_normal((12, 2))
        wts = rng.standard_normal(12)
        perm = rng.permutation(12)
        b1 = self._bridge(cls, wts, train)
        b2 = self._bridge(cls, wts[perm], train[perm])
        for a, p in rng.standard_normal((5, 2)):
            assert fn(b1, a, [p]) == pytest.approx(fn(b2, a, [p]), rel=1e-12, abs=1e-14)

    def test_dimension_mismatch(self):
        b = self._bridge(BridgeH, [1.0], [[0.0, 0.0]])
        with pytest.raises(DimensionMismatch):
            eval_h(b, 0.0, [1.0, 2.0])

    def test_nonfinite_weights(self):
        with pytest.raises(NonFiniteWeights):
            self._bridge(BridgeH, [np.nan], [[0.0, 0.0]])

    def test_grid_values_match_predict(self):
        d = toy_data()
        h = fit_h(d, default_hyper(d.n))
        grid = np.linspace(-1, 1, 4)
        v = h.grid_values(grid, d.w)
        for g, a in enumerate(grid):
            assert np.allclose(v[g], h.predict(np.full(d.n, a), d.w), rtol=1e-10, atol=1e-12)

    def test_dict_round_trip(self):
        d = toy_data()
        h = fit_h(d, default_hyper(d.n))
        back = BridgeH.from_dict(h.to_dict())
        assert np.array_equal(back.predict(d.a, d.w), h.predict(d.a, d.w))


def test_projection_formula_matches_direct_inverse():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((15, 2))
    k = gram_matrix(x, x, KernelSpec(0.4))
    ratio = 0.7
    proj = critic_projection(k, ratio)
    evals, evecs = np.linalg.eigh(k)
    root = (evecs * np.sqrt(np.clip(evals, 0, None))) @ evecs.T
    direct = root @ np.linalg.inv(ratio / 15 * k + np.eye(15)) @ root
    assert np.allclose(proj, direct, atol=1e-7)


def test_dual_weights_solve_printed_system():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((12, 2))
    k = gram_matrix(x, x, KernelSpec(0.4))
    proj = critic_projection(k, 0.5)
    t = rng.standard_normal(12)
    alpha = solve_dual_weights(k, proj, t, 0.01)
    lhs = (k @ proj @ k + 4 * 0.01 * k) @ alpha
    assert np.allclose(lhs, k @ proj @ t, atol=1e-6)
