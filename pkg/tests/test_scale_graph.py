import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_scale_solve, objective, random_problem
from scalefuse.geometry import DepthMap, DepthValidityRange
from scalefuse.keyframes import SubmapConfig, partition_submaps
from scalefuse.scale_graph import (
    W_MIN, DimensionMismatch, ScaleEdge, ScaleGraphProblem, ScaleSolution, apply_scales, dump_graph,
    edge_relative_scale, overlap_ratios, solve_scales,
)

LN2 = np.log(2.0)


class TestOverlapRatios:
    v = DepthValidityRange(0.05, 20.0)

    def test_proportional(self):
        d = np.random.default_rng(0).uniform(0.5, 5, (6, 7))
        np.testing.assert_allclose(overlap_ratios(DepthMap(2 * d), DepthMap(d), self.v), 2.0)

    def test_gating(self):
        d = np.full((3, 3), 1.5)
        dj = d.copy()
        dj[1, 1] = 0
        r = overlap_ratios(DepthMap(d), DepthMap(dj), self.v)
        assert r.size == 8 and np.all(r == 1.0)

    def test_epsilon_gate(self):
        r = overlap_ratios(DepthMap(np.array([[1.0, 2.0]])), DepthMap(np.array([[0.5, 0.04]])), self.v)
        np.testing.assert_array_equal(r, [2.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            overlap_ratios(DepthMap(np.ones((2, 2))), DepthMap(np.ones((2, 3))), self.v)


class TestEdgeScale:
    def test_median(self):
        assert edge_relative_scale([[1.9, 2.0], [2.1]], 100).r == 2.0

    def test_empty_pool(self):
        e = edge_relative_scale([[], []], 100)
        assert (e.r, e.weight, e.valid_count) == (1.0, W_MIN, 0)

    def test_mixed_pool(self):
        assert edge_relative_scale([[3.0] * 6, [100.0] * 4], 100).r == 3.0

    def test_weight_rule(self):
        # N_ref = 0.1 * 2 frames * 100 px = 20
        assert edge_relative_scale([[1.0] * 5, [1.0] * 5], 100).weight == 0.5
        assert edge_relative_scale([[1.0] * 50, []], 100).weight == 1.0
        assert edge_relative_scale([[1.0]], 1e6).weight == W_MIN


class TestSolve:
    def test_prior_only(self):
        sol = solve_scales(ScaleGraphProblem((LN2,)))
        assert sol.log_scales[0] == pytest.approx(LN2, abs=1e-15)
        assert sol.scales[0] == pytest.approx(2.0, rel=1e-12)

    def test_chain_small_lambda(self):
        p = ScaleGraphProblem((0.0, 0.0, 0.0), (ScaleEdge(0, 1, LN2), ScaleEdge(1, 2, 0.0)), 1e-9)
        np.testing.assert_allclose(solve_scales(p).log_scales, [2 * LN2 / 3, -LN2 / 3, -LN2 / 3], atol=1e-8)

    def test_consistent_problem(self):
        x = np.array([0.1, -0.3, 0.7])
        p = ScaleGraphProblem(tuple(x), (ScaleEdge(0, 1, x[0] - x[1]), ScaleEdge(1, 2, x[1] - x[2])), 0.1)
        sol = solve_scales(p)
        np.testing.assert_allclose(sol.log_scales, x, atol=1e-12)
        assert sol.final_cost < 1e-24

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            p = random_problem(rng)
            sol = solve_scales(p)
            assert sol.converged
            assert np.max(np.abs(sol.log_scales - dense_scale_solve(p))) < 1e-8
            assert sol.final_cost <= sol.initial_cost

    def test_gradient_matches_objective(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = random_problem(rng)
            x = rng.normal(size=p.node_count)
            h = 1e-6
            fd = [(objective(p, x + h * e) - objective(p, x - h * e)) / (2 * h) for e in np.eye(p.node_count)]
            np.testing.assert_allclose(p.gradient(x), fd, rtol=1e-5, atol=1e-7)
            assert p.cost(x) == pytest.approx(objective(p, x), rel=1e-12)

    def test_monotone_cost(self, monkeypatch):
        costs = []
        rng = np.random.default_rng(11)
        p = random_problem(rng)
        orig = ScaleGraphProblem.residuals

        def spy(self, x):
            r = orig(self, x)
            costs.append(float(r @ r))
            return r

        monkeypatch.setattr(ScaleGraphProblem, "residuals", spy)
        solve_scales(p)
        assert all(b <= a for a, b in zip(costs, costs[1:]))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.1, 10))
    def test_gauge_shift(self, seed, c):
        p = random_problem(np.random.default_rng(seed))
        shifted = ScaleGraphProblem(tuple(np.asarray(p.priors) + np.log(c)), p.edges, p.lam)
        a, b = solve_scales(p).log_scales, solve_scales(shifted).log_scales
        np.testing.assert_allclose(b - a, np.log(c), atol=1e-8)

    def test_positivity_extreme(self):
        p = ScaleGraphProblem((-50.0, 50.0), (ScaleEdge(0, 1, 80.0),), 1.0)
        assert np.all(solve_scales(p).scales > 0)

    def test_warns_when_out_of_iterations(self, caplog):
        p = ScaleGraphProblem((0.0, 1.0), (ScaleEdge(0, 1, 0.5),))
        with caplog.at_level(logging.WARNING):
            sol = solve_scales(p, max_iters=0)
        assert not sol.converged
        assert "scale solve stopped" in caplog.text

    def test_validation(self):
        with pytest.raises(ValueError):
            ScaleGraphProblem((0.0,), (), 0.0)
        with pytest.raises(ValueError):
            ScaleGraphProblem((0.0, 0.0), (ScaleEdge(0, 2, 0.0),))
        with pytest.raises(ValueError):
            ScaleEdge(1, 0, 0.0)


class TestApply:
    def sol(self, scales):
        return ScaleSolution(np.log(scales), 0.0, 0.0, 0)

    def test_first_submap_wins(self):
        subs = partition_submaps(6, SubmapConfig(4, 2))
        depths = [[DepthMap(np.full((1, 2), 1.5)) for _ in s.positions] for s in subs]
        depths[0][0] = DepthMap(np.array([[1.5, 0.0]]))
        out = apply_scales(depths, subs, self.sol([2.0, 3.0]))
        assert len(out) == 6
        np.testing.assert_allclose([d.values[0, 1] for d in out], [0.0, 3.0, 3.0, 3.0, 4.5, 4.5])
        assert out[0].values[0, 0] == 3.0

    def test_unit_scale_is_bit_identical(self):
        subs = partition_submaps(3, SubmapConfig(4, 2))
        d = DepthMap(np.random.default_rng(0).uniform(0, 3, (4, 4)))
        out = apply_scales([[d, d, d]], subs, ScaleSolution(np.zeros(1), 0, 0, 0))
        assert np.array_equal(out[0].values, d.values)


def test_dump_graph(tmp_path):
    p = ScaleGraphProblem((0.0, LN2), (ScaleEdge(0, 1, -LN2, 0.5, 42),))
    dump_graph(tmp_path / "g.txt", p, solve_scales(p))
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert lines[0].split()[:2] == ["0", "1"] and float(lines[0].split()[2]) == pytest.approx(0.5)
    assert lines[0].split()[4] == "42"
    assert len(lines) == 3 and float(lines[2].split()[1]) == pytest.approx(2.0)
