import numpy as np
import pytest
from scipy.stats import chisquare

from cascade_lab.diffusion import DiffusionSpec, exact_influence
from cascade_lab.evaluation import (PRESETS, ExperimentConfig, ResultsTable, degradation_trend,
                                    ground_truth, mae_total, run_misspecification_sweep,
                                    run_nonuniform_sweep, run_retention_sweep, sample_seed_sets,
                                    sq_error)
from cascade_lab.graph import DirectedGraph

TINY = dict(power=4, edges=24, cascades=300, test_sets=8, truth_samples=300, K=15,
            max_seed_size=4, replications=2)


class TestSeedSets:
    def test_power_law_sizes(self):
        sets = sample_seed_sets(100, 1_000_000, 2.5, 3, np.random.default_rng(0))
        counts = np.bincount([len(s) for s in sets], minlength=4)[1:]
        p = np.arange(1, 4) ** -2.5
        assert chisquare(counts, p / p.sum() * len(sets)).pvalue > 1e-3
        assert counts[0] / counts[1] == pytest.approx(2**2.5, rel=0.02)

    def test_edge_cases(self):
        rng = np.random.default_rng(0)
        assert all(len(s) == 1 for s in sample_seed_sets(10, 100, 2.5, 1, rng))
        assert sample_seed_sets(10, 0, 2.5, 3, rng) == []
        with pytest.raises(ValueError):
            sample_seed_sets(10, 5, 1.0, 3, rng)
        with pytest.raises(ValueError):
            sample_seed_sets(3, 5, 2.5, 4, rng)

    def test_members_distinct_in_range(self):
        for s in sample_seed_sets(20, 500, 2.5, 20, np.random.default_rng(1)):
            assert 1 <= len(s) <= 20 and max(s) < 20


class TestGroundTruth:
    def test_matches_exact(self, diamond_dic):
        sets = [frozenset({0}), frozenset({2}), frozenset({0, 2})]
        gt = ground_truth(diamond_dic, sets, 20_000, np.random.default_rng(0))
        for i, s in enumerate(sets):
            exact = exact_influence(diamond_dic, s).sum()
            assert abs(gt.totals[i] - exact) <= 3 * gt.total_se[i] + 1e-12

    def test_all_seeds(self, chain_dic):
        gt = ground_truth(chain_dic, [frozenset({0, 1, 2})], 10, np.random.default_rng(0))
        assert gt.totals[0] == 3.0

    def test_standard_error_scaling(self, chain_dic):
        a = ground_truth(chain_dic, [frozenset({0})], 20_000, np.random.default_rng(1))
        b = ground_truth(chain_dic, [frozenset({0})], 40_000, np.random.default_rng(2))
        assert b.total_se[0] / a.total_se[0] == pytest.approx(1 / np.sqrt(2), rel=0.05)


class TestMetrics:
    def test_mae(self):
        assert mae_total([1, 2], [1, 2]) == 0
        assert mae_total([1, 3], [2, 2]) == 1.0
        # pairing matters: the same multiset in a different order changes the value
        assert mae_total([1, 5], [1, 5]) != mae_total([5, 1], [1, 5])
        with pytest.raises(ValueError):
            mae_total([1], [1, 2])
        with pytest.raises(ValueError):
            mae_total([], [])

    def test_sq_error_perfect(self):
        spec = DiffusionSpec("dic", DirectedGraph.from_edges(3, [(0, 1), (1, 2)], [1.0, 1.0]))
        err = sq_error(lambda x: np.ones(x.shape), spec, [frozenset({0})], 20, np.random.default_rng(0))
        assert err == 0.0

    def test_sq_error_bernoulli_half(self):
        spec = DiffusionSpec("dic", DirectedGraph.from_edges(2, [(0, 1)], [0.5]))
        pred = lambda x: np.where(x, 1.0, 0.5)
        err = sq_error(pred, spec, [frozenset({0})], 40_000, np.random.default_rng(0))
        # seed contributes 0, the Bernoulli(0.5) node contributes 0.25, averaged over n=2
        assert err == pytest.approx(0.125, abs=0.003)

    def test_sq_error_minimized_by_truth(self, diamond_dic):
        s = frozenset({0})
        truth = exact_influence(diamond_dic, s)
        rng_seed = 5
        best = sq_error(lambda x: truth[None, :], diamond_dic, [s], 20_000, np.random.default_rng(rng_seed))
        for delta in ([0, 0.1, 0], [0, 0, -0.15], [0, -0.1, 0.1]):
            off = np.clip(truth + delta, 0, 1)
            worse = sq_error(lambda x: off[None, :], diamond_dic, [s], 20_000,
                             np.random.default_rng(rng_seed))
            assert worse > best


class TestResultsTable:
    def test_aggregate_and_relative(self, tmp_path):
        t = ResultsTable()
        for rep, (a, b) in enumerate([(1.0, 1.5), (2.0, 2.0)]):
            t.add("ours", 0.8, rep, a)
            t.add("ours", 1.0, rep, b)
        agg = t.aggregate()
        assert agg[0] == ("ours", 0.8, 1.5, 0.5)
        rel = dict((p, m) for _, p, m, _ in t.relative(0.8))
        assert rel[0.8] == 0 and rel[1.0] == pytest.approx(0.25)
        t.write_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "method,param,replication,mae" and len(lines) == 5
        t.write_aggregate(tmp_path / "a.csv")
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "method,param,mean_mae,std_mae"
        with pytest.raises(ValueError):
            t.add("ours", 0.5, 0, -1.0)

    def test_degradation_trend(self):
        t = ResultsTable()
        for p, v in [(0.6, 1.4), (0.7, 1.2), (0.8, 1.0), (0.9, 1.1), (1.0, 1.3)]:
            t.add("ours", p, 0, v)
        assert degradation_trend(t, 0.8) > 0


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(**TINY)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_presets(self):
        paper = PRESETS["paper"]
        assert (paper.power, paper.edges, paper.cascades, paper.test_sets, paper.replications) == \
            (9, 1024, 8192, 200, 5)
        assert ExperimentConfig.from_dict({"preset": "paper", "seed": 4}).power == 9
        assert PRESETS["paper"].sigma_grid == (0.0, 0.02, 0.05, 0.1, 0.2)
        assert PRESETS["paper"].K == 200

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(retention_grid=())
        with pytest.raises(ValueError):
            ExperimentConfig(cascades=0)
        with pytest.raises(ValueError):
            ExperimentConfig(methods=("ours", "netrate"))
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"bogus": 1})


class TestSweeps:
    def test_retention_shape_and_equality_at_one(self):
        cfg = ExperimentConfig(retention_grid=(0.5, 1.0), **TINY)
        t = run_retention_sweep(cfg)
        assert len(t.rows) == 2 * 2 * 4
        assert np.array_equal(t.values("ours", 1.0), t.values("influlearner", 1.0))

    def test_reproducible(self):
        cfg = ExperimentConfig(retention_grid=(0.8,), methods=("ours", "linear"), **TINY)
        assert run_retention_sweep(cfg).rows == run_retention_sweep(cfg).rows

    def test_single_grid_value(self):
        cfg = ExperimentConfig(retention_grid=(1.0,), methods=("ours",), **TINY)
        assert run_retention_sweep(cfg).params() == [1.0]

    def test_misspecification(self):
        cfg = ExperimentConfig(assumed_grid=(0.6, 0.8, 1.0), **TINY)
        t = run_misspecification_sweep(cfg)
        rel = {p: m for _, p, m, _ in t.relative(0.8)}
        assert rel[0.8] == 0 and all(np.isfinite(list(rel.values())))
        full = run_retention_sweep(ExperimentConfig(retention_grid=(0.8,), methods=("influlearner",),
                                                    **TINY))
        assert np.array_equal(t.values("ours", 1.0), full.values("influlearner", 0.8))

    def test_nonuniform(self):
        cfg = ExperimentConfig(sigma_grid=(0.0, 0.2), **TINY)
        t = run_nonuniform_sweep(cfg)
        assert len(t.rows) == 2 * 2
        assert {p: m for _, p, m, _ in t.relative(0.0)}[0.0] == 0
        # sigma=0 with the shared streams matches the uniform retention sweep at the same rate
        same = run_retention_sweep(ExperimentConfig(retention_grid=(0.8,), methods=("ours",), **TINY))
        assert np.array_equal(t.values("ours", 0.0), same.values("ours", 0.8))
