import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrl_lab.cmdp import CmdpError, CmdpSpec, start_values
from rrl_lab.envs import DEFAULT_TOY, toy_env_build
from rrl_lab.oracle import InfeasibleError, constrained_optimum, enumerate_policies, exact_pareto_front

from oracles import random_spec


def _grid_mixture_optimum(points, d, resolution=1e-4):
    """Best start-mixture of any two deterministic policies on a weight grid."""
    w = np.linspace(0.0, 1.0, int(round(1 / resolution)) + 1)
    best = -np.inf
    for p, q in itertools.combinations_with_replacement(points, 2):
        cost = w * p.value_cost + (1 - w) * q.value_cost
        value = w * p.value_reward + (1 - w) * q.value_reward
        ok = cost <= d + 1e-12
        if ok.any():
            best = max(best, value[ok].max())
    return best


def _random_specs(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        spec = random_spec(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)), 0.9)
        yield spec


class TestEnumerate:
    def test_count(self):
        assert len(enumerate_policies(toy_env_build(DEFAULT_TOY))) == 4
        rng = np.random.default_rng(1)
        assert len(enumerate_policies(random_spec(rng, 3, 3, 0.9))) == 27

    def test_zero_reward(self):
        spec = toy_env_build(DEFAULT_TOY)
        flat = CmdpSpec(spec.transition, np.zeros((2, 2)), spec.cost, 0.9)
        assert all(p.value_reward == 0 for p in enumerate_policies(flat))

    def test_values_agree_with_exact_evaluation(self):
        for spec in _random_specs(5):
            for p in enumerate_policies(spec):
                v, c = start_values(spec, p.policy)
                assert abs(v - p.value_reward) <= 1e-9 and abs(c - p.value_cost) <= 1e-9
                assert p.deterministic

    def test_guard(self):
        spec = CmdpSpec(np.full((21, 2, 21), 1 / 21), np.zeros((21, 2)), np.zeros((21, 2)), 0.9)
        with pytest.raises(CmdpError, match="enumeration guard"):
            enumerate_policies(spec)


class TestConstrainedOptimum:
    def test_slack_constraint(self):
        spec = toy_env_build(DEFAULT_TOY).with_threshold(100.0)
        sol = constrained_optimum(spec)
        assert sol.lambda_star == 0 and not sol.is_mixture
        assert sol.policy.actions == (0, 0)
        assert sol.optimal_value == pytest.approx(10.0, abs=1e-12)

    def test_infeasible(self):
        spec = toy_env_build(DEFAULT_TOY)
        strict = CmdpSpec(spec.transition, spec.reward, spec.cost + 0.1, spec.discount, threshold_d=0.5)
        with pytest.raises(InfeasibleError):
            constrained_optimum(strict)

    def test_toy_mixture(self):
        spec = toy_env_build(DEFAULT_TOY)
        points = enumerate_policies(spec)
        sol = constrained_optimum(spec, points)
        assert sol.is_mixture and 0 <= sol.mixture_weight <= 1
        assert abs(sol.optimal_cost - spec.threshold_d) <= 1e-6
        best_feasible = max(p.value_reward for p in points if p.value_cost <= spec.threshold_d)
        assert sol.optimal_value > best_feasible
        grid = _grid_mixture_optimum(points, spec.threshold_d)
        assert grid <= sol.optimal_value + 1e-9
        assert sol.optimal_value - grid <= 1e-4 * 10.0

    def test_mixture_is_convex_combination(self):
        for spec in _random_specs(30, seed=3):
            pts = enumerate_policies(spec)
            costs = sorted(p.value_cost for p in pts)
            spec = spec.with_threshold(0.5 * (costs[0] + costs[-1]))
            sol = constrained_optimum(spec, pts)
            assert sol.optimal_cost <= spec.threshold_d + 1e-9
            if sol.is_mixture:
                w, a, b = sol.mixture_weight, sol.policy, sol.alternative
                assert sol.optimal_value == pytest.approx(w * a.value_reward + (1 - w) * b.value_reward, abs=1e-12)
                assert sol.optimal_cost == pytest.approx(w * a.value_cost + (1 - w) * b.value_cost, abs=1e-12)

    def test_dominates_feasible_deterministic_and_matches_grid(self):
        for spec in _random_specs(15, seed=7):
            pts = enumerate_policies(spec)
            costs = sorted(p.value_cost for p in pts)
            d = costs[0] + 0.3 * (costs[-1] - costs[0])
            spec = spec.with_threshold(d)
            sol = constrained_optimum(spec, pts)
            feasible = [p.value_reward for p in pts if p.value_cost <= d]
            assert sol.optimal_value >= max(feasible) - 1e-12
            if len(pts) <= 16:
                spread = max(p.value_reward for p in pts) - min(p.value_reward for p in pts)
                grid = _grid_mixture_optimum(pts, d)
                assert grid <= sol.optimal_value + 1e-9
                assert sol.optimal_value - grid <= 1e-4 * spread + 1e-9

    def test_zero_lambda_when_unconstrained_optimum_feasible(self):
        for spec in _random_specs(10, seed=11):
            pts = enumerate_policies(spec)
            top = max(pts, key=lambda p: p.value_reward)
            sol = constrained_optimum(spec.with_threshold(top.value_cost + 1.0), pts)
            assert sol.lambda_star == 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.lists(st.floats(0, 1), min_size=2, max_size=6))
    def test_monotone_in_threshold(self, seed, fracs):
        spec = next(_random_specs(1, seed=seed))
        pts = enumerate_policies(spec)
        lo, hi = min(p.value_cost for p in pts), max(p.value_cost for p in pts)
        values = [constrained_optimum(spec.with_threshold(lo + f * (hi - lo)), pts).optimal_value for f in sorted(fracs)]
        assert all(a <= b + 1e-9 for a, b in zip(values, values[1:]))


class TestParetoFront:
    def _brute(self, points):
        keep = []
        for i, p in enumerate(points):
            dominated = any(
                (q.value_reward >= p.value_reward and q.value_cost <= p.value_cost)
                and (q.value_reward > p.value_reward or q.value_cost < p.value_cost)
                for q in points
            )
            duplicate = any(
                q.value_reward == p.value_reward and q.value_cost == p.value_cost for q in points[:i]
            )
            if not dominated and not duplicate:
                keep.append(p)
        return sorted(keep, key=lambda p: p.value_cost)

    def test_degenerate(self):
        spec = CmdpSpec(np.full((2, 2, 2), 0.5), np.ones((2, 2)), np.zeros((2, 2)), 0.9)
        assert len(exact_pareto_front(spec)) == 1

    def test_toy_front(self):
        spec = toy_env_build(DEFAULT_TOY)
        pts = enumerate_policies(spec)
        front = exact_pareto_front(spec, pts)
        assert [p.actions for p in front] == [p.actions for p in self._brute(pts)]
        assert [p.actions for p in front] == [(0, 1), (0, 0)]

    def test_random_fronts(self):
        for spec in _random_specs(20, seed=5):
            pts = enumerate_policies(spec)
            front = exact_pareto_front(spec, pts)
            assert [p.actions for p in front] == [p.actions for p in self._brute(pts)]
            assert all(a.value_cost < b.value_cost and a.value_reward < b.value_reward for a, b in zip(front, front[1:]))
