import json

import numpy as np
import pytest

from proxkdr.bench import (
    BenchConfig,
    CmseTable,
    cached_truth,
    cmse,
    rate_study,
    reference_grid,
    replication_evaluations,
    run_bench,
    sensitivity_sweep,
)
from proxkdr.errors import InvalidSpec, LengthMismatch
from proxkdr.estimators import AteCurve
from proxkdr.scenarios import parse_scenario

SMALL = dict(replications=2, truth_reps=512, grid=(-1.0, 2.0, 15))


def small_config(**kw):
    opts = {**SMALL, **kw}
    return BenchConfig(scenario=parse_scenario(opts.pop("name", "lowdim1"), n=opts.pop("n", 80)), **opts)


class TestCmse:
    def test_identical(self):
        assert cmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_offset(self):
        assert cmse(np.arange(5.0) + 0.3, np.arange(5.0)) == pytest.approx(0.09)

    def test_curve_input(self):
        curve = AteCurve(np.array([0.0, 1.0]), np.array([1.0, 1.0]), "por")
        assert cmse(curve, [0.0, 0.0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            cmse([1.0], [1.0, 2.0])

    def test_permutation(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(10), rng.standard_normal(10)
        p = rng.permutation(10)
        assert cmse(a[p], b[p]) == pytest.approx(cmse(a, b), rel=1e-15)


class TestConfig:
    def test_defaults(self):
        cfg = BenchConfig(scenario=parse_scenario("lowdim2"))
        assert cfg.misspec == "w_star"
        assert cfg.grid == (-1.0, 2.0, 100)
        assert cfg.policy_kind == "kde"
        assert cfg.c_values == (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
        assert BenchConfig(scenario=parse_scenario("highdim")).policy_kind == "parametric"

    @pytest.mark.parametrize("kw", [{"replications": 0}, {"grid": (0, 1, 0)}, {"methods": ("foo",)},
                                    {"c_values": (0.0,)}, {"policy_kind": "flow"}, {"s": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidSpec):
            BenchConfig(scenario=parse_scenario("lowdim1"), **kw)

    def test_from_dict(self):
        cfg = BenchConfig.from_dict({"scenario": {"id": "hu1", "n": 300}, "replications": 3, "c_values": [1.0, 2.0]})
        assert cfg.scenario.n == 300 and cfg.replications == 3 and cfg.c_values == (1.0, 2.0)
        with pytest.raises(InvalidSpec):
            BenchConfig.from_dict({"scenario": "hu1", "bogus": 1})


class TestRunBench:
    def test_self_comparison_is_zero(self):
        cfg = small_config(methods=("por",), replications=1)
        evals, _ = replication_evaluations(cfg, 0)
        table = run_bench(cfg, truth=evals.por())
        assert table.mean("por") == 0.0

    def test_deterministic(self):
        cfg = small_config()
        t1, t2 = run_bench(cfg), run_bench(cfg)
        assert t1.raw == t2.raw
        assert t1.to_json() == t2.to_json()

    def test_table_shape(self):
        cfg = small_config(c_values=(1.0, 2.0))
        table = run_bench(cfg)
        assert set(table.keys()) == {("por", None), ("pkipw", 1.0), ("pkipw", 2.0), ("pkdr", 1.0), ("pkdr", 2.0)}
        for row in table.rows():
            assert row["std"] >= 0 and np.isfinite(row["mean"])
        assert table.best_c("pkdr") in (1.0, 2.0)

    def test_zero_q_matches_por(self):
        cfg = small_config(replications=1)
        evals, _ = replication_evaluations(cfg, 0)
        zeroed = type(evals)(evals.grid, evals.y, evals.a, evals.h_vals, np.zeros_like(evals.q_vals))
        assert np.array_equal(zeroed.pkdr(0.4), zeroed.por())

    def test_failures_are_recorded(self):
        # the KDE policy refuses fewer than 30 rows, so every replication fails
        cfg = small_config(n=20, methods=("pkipw",))
        table = run_bench(cfg)
        assert len(table.failures) == 2 and table.raw == {}

    def test_outputs(self, tmp_path):
        table = run_bench(small_config())
        table.to_csv(tmp_path / "t.csv")
        doc = json.loads(table.to_json(tmp_path / "t.json"))
        table.write_curves(tmp_path / "c.csv")
        assert (tmp_path / "t.csv").read_text().startswith("method,c,mean,std")
        assert len(doc["cells"]) == 1 + 2 * 8
        assert (tmp_path / "c.csv").read_text().splitlines()[0].startswith("a,truth,por,pkipw_c0.5")

    def test_truth_cache(self, tmp_path):
        spec = parse_scenario("hu1")
        grid = np.linspace(5.5, 7, 5)
        first = cached_truth(spec, grid, 256, tmp_path)
        assert len(list(tmp_path.glob("truth-*.npy"))) == 1
        assert np.array_equal(first, cached_truth(spec.with_(n=17), grid, 256, tmp_path))
        assert len(list(tmp_path.glob("truth-*.npy"))) == 1


class TestSweep:
    def test_single_c_equals_run_bench(self):
        cfg = small_config(c_values=(1.5,), methods=("pkdr",))
        prof = sensitivity_sweep(cfg)
        assert prof == [(1.5, run_bench(cfg).mean("pkdr", 1.5))]

    def test_order_invariant(self):
        p1 = dict(sensitivity_sweep(small_config(c_values=(1.0, 2.0, 3.0))))
        p2 = dict(sensitivity_sweep(small_config(c_values=(3.0, 1.0, 2.0))))
        assert p1 == p2

    def test_por_has_no_sweep(self):
        with pytest.raises(ValueError):
            sensitivity_sweep(small_config(), method="por")


class TestRate:
    def test_single_n(self):
        res = rate_study(parse_scenario("hu1"), [60], replications=2, truth_reps=256)
        assert res.n_values == (60,)
        assert len(res.errors[60]) == 2 and np.all(res.errors[60] >= 0)

    def test_increasing_n_required(self):
        with pytest.raises(InvalidSpec):
            rate_study(parse_scenario("hu1"), [200, 100], replications=1)

    def test_reference_grid_interior(self):
        ref = reference_grid(parse_scenario("hu1"))
        assert len(ref) == 5 and ref[0] > 5.5 and ref[-1] < 7.0
        assert np.allclose(np.diff(ref), 0.25)
