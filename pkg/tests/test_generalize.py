import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxskill import generalize
from ctxskill.domains import get_domain
from ctxskill.generalize import SweepConfig, SweepRecord, build_grid, diff_histogram, sweep
from ctxskill.net import Genome
from ctxskill.trainer import TaskList, episode_results


def records(a, b, metric_index=0):
    out = []
    for i, (x, y) in enumerate(zip(a, b)):
        fa = (x, 0.0) if metric_index == 0 else (0.0, x)
        fb = (y, 0.0) if metric_index == 0 else (0.0, y)
        out.append(SweepRecord((i,), (0.0,), {"A": fa, "B": fb}))
    return out


def genome(kind, seed, domain="flappy"):
    return Genome.random(get_domain(domain).arch(kind), np.random.default_rng(seed))


class TestGrid:
    def test_default_ranges(self):
        assert SweepConfig("flappy").ranges == [(-21.0, -3.0), (1.25, 8.75), (0.25, 1.75), (0.25, 1.75)]
        lander = SweepConfig("lander").ranges
        assert lander == [(10.0, 30.0), (0.5, 1.5), (4.0, 12.0)]
        lane = SweepConfig("lane").ranges
        np.testing.assert_allclose(lane, [(0.65, 1.35), (0.65, 1.35)], rtol=0, atol=1e-15)

    def test_counts_and_endpoints(self):
        cfg = SweepConfig("flappy", steps=3, samples=2)
        grid = build_grid(cfg)
        assert len(grid) == 81 and generalize.episode_count(cfg) == 162
        assert grid[0][1] == (-21.0, 1.25, 0.25, 0.25)
        assert grid[-1][1] == (-3.0, 8.75, 1.75, 1.75)
        assert grid[1][0] == (0, 0, 0, 1)

    def test_default_steps(self):
        assert generalize.episode_count(SweepConfig("flappy")) == 30_000
        assert len(build_grid(SweepConfig("lane"))) == 1225

    def test_single_step(self):
        grid = build_grid(SweepConfig("lane", ranges=[(1.0, 1.0), (0.9, 0.9)], steps=1))
        assert grid == [((0, 0), (1.0, 0.9))]

    @pytest.mark.parametrize("bad", [{"ranges": [(0, 1)]}, {"steps": 0}, {"samples": 0}, {"n_bins": 0}])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            SweepConfig("flappy", **bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            SweepConfig.from_dict({"domain": "flappy", "grid": 3})

    def test_dict_round_trip(self):
        cfg = SweepConfig("lander", steps=4, samples=2, seed=7)
        assert SweepConfig.from_dict(cfg.to_dict()) == cfg

    def test_point_seeds_shared_and_seeded(self):
        cfg = SweepConfig("flappy", steps=2, samples=3, seed=5)
        a = generalize.point_seeds(cfg, 16)
        assert a.shape == (16, 3)
        assert np.array_equal(a, generalize.point_seeds(cfg, 16))


class TestHistogram:
    def test_hand_example(self):
        h = diff_histogram(records([1, 2, 3], [1, 1, 1], 1), "f1", ("A", "B"), sense="max")
        s = h.summary
        assert s["mean_diff"] == pytest.approx(1.0)
        assert s["fraction_a_better"] == pytest.approx(2 / 3)
        assert (s["wins"], s["ties"], s["losses"]) == (2, 1, 0)
        assert h.edges[0] == -2.0 and h.edges[-1] == 2.0

    def test_identical_falls_in_central_bin(self):
        h = diff_histogram(records([4.0] * 7, [4.0] * 7), "f0", ("A", "B"))
        assert h.counts[20] == 7 and h.counts.sum() == 7
        assert (h.edges[0], h.edges[-1]) == (-1.0, 1.0)

    def test_extremes_counted(self):
        h = diff_histogram(records([0.0, 5.0], [5.0, 0.0]), "f0", ("A", "B"))
        assert h.counts[0] == 1 and h.counts[-1] == 1

    def test_rows(self):
        h = diff_histogram(records([1.0], [0.0]), "f0", ("A", "B"), n_bins=3)
        rows = list(h.rows())
        assert len(rows) == 3 and rows[-1] == (pytest.approx(1 / 3), 1.0, 1)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=40),
           st.integers(1, 41))
    def test_counts_sum_and_antisymmetry(self, pairs, n_bins):
        a, b = zip(*pairs)
        fwd = diff_histogram(records(a, b), "f0", ("A", "B"), n_bins=n_bins)
        rev = diff_histogram(records(a, b), "f0", ("B", "A"), n_bins=n_bins)
        assert fwd.counts.sum() == len(pairs)
        assert fwd.summary["mean_diff"] == pytest.approx(-rev.summary["mean_diff"], abs=1e-9)
        assert fwd.summary["wins"] == rev.summary["losses"]
        np.testing.assert_allclose(fwd.edges, -rev.edges[::-1], rtol=0, atol=1e-12)

    def test_min_sense_wins(self):
        s = diff_histogram(records([0, 1, 5], [1, 1, 1]), "f0", ("A", "B"), sense="min").summary
        assert (s["wins"], s["ties"], s["losses"]) == (1, 1, 1)


class TestSweep:
    def cfg(self, **kw):
        return SweepConfig(**{**dict(domain="flappy", steps=2, samples=1, seed=3), **kw})

    def test_identical_slots_have_zero_diffs(self):
        g = genome("CS", 1)
        recs = sweep({"CS": g, "copy": ("CS", g)}, build_grid(self.cfg()), self.cfg())
        for metric in ("f0", "f1"):
            h = diff_histogram(recs, metric, ("CS", "copy"))
            assert h.summary["ties"] == 16

    def test_deterministic_and_worker_invariant(self):
        nets = {"CS": genome("CS", 2), "S": genome("S", 3)}
        grid = build_grid(self.cfg())
        a = sweep(nets, grid, self.cfg(workers=1))
        b = sweep(nets, grid, self.cfg(workers=2))
        assert [r.metrics for r in a] == [r.metrics for r in b]
        assert [r.params for r in a] == [p for _, p in grid]

    def test_single_point_matches_training_evaluation(self):
        # at the base parameters a sweep point is a task of repeated episodes on its shared seeds
        dom = get_domain("flappy")
        base = dom.base_params
        cfg = SweepConfig("flappy", ranges=[(b, b) for b in base], steps=1, samples=3, seed=11, track="train")
        g = genome("C", 4)
        (rec,) = sweep({"C": g}, build_grid(cfg), cfg)
        seeds = [int(s) for s in generalize.point_seeds(cfg, 1)[0]]
        tl = TaskList(tuple((0, tuple(base)) for _ in seeds))
        res = np.array(episode_results(g, "C", tl, dom, seeds))
        assert rec.metrics["C"] == (float(res[:, 0].mean()), float(res[:, 1].mean()))

    def test_lane_uses_eval_track(self):
        cfg = SweepConfig("lane", steps=2, samples=1)
        recs = sweep({"S": genome("S", 5, "lane")}, build_grid(cfg), cfg)
        assert len(recs) == 4
        assert all(np.isfinite(r.metrics["S"]).all() for r in recs)

    def test_metric_means(self):
        recs = records([1.0, 3.0], [0.0, 0.0])
        assert generalize.metric_means(recs, "A") == (2.0, 0.0)
