import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rrl_lab.cmdp import Trajectory, Transition
from rrl_lab.metrics import (
    UNDISCOUNTED,
    MetricReport,
    aggregate,
    default_reference,
    emotional_alignment,
    engagement_rate,
    evaluate_trajectories,
    hypervolume,
    pareto_index,
    safety_cost,
    violation_probability,
)

from oracles import mc_exclusive_hypervolume, ref_alignment, ref_engagement_rate

VALENCE = (1, 1, 0, 1, -1)


def _traj(actions, costs=None, latents=None):
    n = len(actions)
    costs = costs if costs is not None else [0.0] * n
    latents = latents if latents is not None else [0.0] * n
    return Trajectory(tuple(Transition(0, a, 0.0, c, 0, latent_e=e) for a, c, e in zip(actions, costs, latents)))


def _report(v, n=10):
    return MetricReport(v, v, v, v, n, v)


steps_st = st.lists(st.tuples(st.integers(0, 4), st.floats(-1, 1)), min_size=1, max_size=40)


class TestRates:
    def test_engagement_examples(self):
        assert engagement_rate(_traj([0, 0, 0]), {0}) == 1.0
        assert engagement_rate(_traj([4, 4]), {0}) == 0.0
        assert engagement_rate(_traj([0, 0, 0] + [4] * 7), {0}) == 0.3

    def test_alignment_examples(self):
        assert emotional_alignment(_traj([0] * 5, latents=[0.5] * 5), VALENCE) == 1.0
        assert emotional_alignment(_traj([2] * 5, latents=[0.5, -0.5, 0.1, 1, -1]), VALENCE) == 0.0
        # products (+, -, 0, +)
        hand = _traj([0, 4, 2, 4], latents=[0.5, 0.5, 0.9, -0.3])
        assert emotional_alignment(hand, VALENCE) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            engagement_rate(Trajectory(()), {0})
        with pytest.raises(ValueError):
            emotional_alignment(Trajectory(()), VALENCE)
        with pytest.raises(ValueError):
            safety_cost([], 0.9)
        with pytest.raises(ValueError):
            violation_probability([], 0.9, 1.0)

    @given(steps_st, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, steps, rnd):
        actions, latents = zip(*steps)
        perm = list(range(len(steps)))
        rnd.shuffle(perm)
        a = _traj(list(actions), latents=list(latents))
        b = _traj([actions[i] for i in perm], latents=[latents[i] for i in perm])
        assert engagement_rate(a, {0, 1, 3}) == engagement_rate(b, {0, 1, 3})
        assert emotional_alignment(a, VALENCE) == emotional_alignment(b, VALENCE)

    @given(steps_st)
    def test_match_reference(self, steps):
        actions, latents = zip(*steps)
        t = _traj(list(actions), latents=list(latents))
        assert engagement_rate(t, {0, 1, 3}) == ref_engagement_rate(actions, {0, 1, 3})
        assert emotional_alignment(t, VALENCE) == ref_alignment(latents, actions, VALENCE)


class TestCosts:
    def test_examples(self):
        assert safety_cost([_traj([0, 0])], 0.9) == 0
        assert safety_cost([_traj([0, 0], [1, 1])], 0.9, UNDISCOUNTED) == 2
        assert safety_cost([_traj([0, 0], [1, 1])], 0.5) == 1.5

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            safety_cost([_traj([0])], 0.9, "cumulative")

    def test_violation_examples(self):
        assert violation_probability([_traj([0, 0])] * 3, 0.9, 0.0) == 0
        assert violation_probability([_traj([0], [0.1]), _traj([0, 0], [0, 2])], 0.9, 0.0) == 1
        eps = [_traj([0], [2.0])] * 3 + [_traj([0], [0.5])] * 7
        assert violation_probability(eps, 0.9, 1.0) == 0.3

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(0.01, 0.999))
    def test_discounted_not_above_undiscounted(self, costs, g):
        t = [_traj([0] * len(costs), costs)]
        assert safety_cost(t, g) <= safety_cost(t, g, UNDISCOUNTED) + 1e-12


class TestPareto:
    def test_single_point(self):
        assert pareto_index([[0.3, 0.4, -1.0]]).tolist() == [1.0]

    def test_two_dimensional_exact(self):
        idx = pareto_index([[1, 2], [2, 1]], reference_point=[0, 0])
        # union volume 3, each exclusive 1
        np.testing.assert_allclose(idx, [1 / 3, 1 / 3])
        assert hypervolume([[1, 2], [2, 1]], [0, 0]) == 3.0

    def test_duplicates_share(self):
        idx = pareto_index([[1, 2], [1, 2], [2, 1]], reference_point=[0, 0])
        np.testing.assert_allclose(idx, [1 / 6, 1 / 6, 1 / 3])

    def test_invalid_reference(self):
        with pytest.raises(ValueError):
            pareto_index([[1, 1, 1]], reference_point=[2, 0, 0])
        with pytest.raises(ValueError):
            pareto_index([[1, 1, 1]], reference_point=[1, 0, 0])
        with pytest.raises(ValueError):
            pareto_index([[1, 1, 1]], reference_point=[0, 0])

    def test_default_reference_margin(self):
        pts = np.array([[0.0, 1.0, -2.0], [1.0, 1.0, -1.0]])
        np.testing.assert_allclose(default_reference(pts), [-0.05, 0.95, -2.05])

    def test_dominated_point(self):
        idx = pareto_index([[1, 1, 1], [0.5, 0.5, 0.5]], reference_point=[0, 0, 0])
        assert idx.tolist() == [1.0, 0.0]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(*[st.integers(0, 8)] * 3), min_size=1, max_size=8))
    def test_sum_bounded_by_one(self, raw):
        pts = np.array(raw, dtype=float) / 8
        idx = pareto_index(pts, np.full(3, -0.1))
        assert np.all(idx >= 0) and idx.sum() <= 1 + 1e-12

    def test_sum_is_one_without_overlap(self):
        # both extra points are dominated, so the survivor owns the whole volume
        idx = pareto_index([[2, 2, 2], [1, 2, 2], [2, 1, 0]], reference_point=[0, 0, 0])
        assert idx.sum() == pytest.approx(1.0) and idx[0] == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(*[st.integers(1, 8)] * 3), min_size=1, max_size=6), st.integers(0, 5))
    def test_adding_dominated_point_changes_nothing(self, raw, pick):
        pts = np.array(raw, dtype=float)
        ref = np.zeros(3)
        base = pareto_index(pts, ref)
        worse = pts[pick % len(pts)] * 0.5
        more = pareto_index(np.vstack([pts, worse]), ref)
        np.testing.assert_allclose(more[:-1], base, atol=1e-12)
        assert more[-1] == 0

    def test_monte_carlo_three_points(self):
        pts = np.array([[3.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.5, 1.5, 2.5]])
        ref = np.zeros(3)
        exclusive, total = mc_exclusive_hypervolume(pts, ref, 1_000_000, np.random.default_rng(0))
        idx = pareto_index(pts, ref)
        assert hypervolume(pts, ref) == pytest.approx(total, rel=0.01)
        np.testing.assert_allclose(idx, exclusive / total, rtol=0.01)


class TestAggregate:
    def test_identical(self):
        agg = aggregate([_report(0.4)] * 3)
        assert all(v == 0 for v in agg.halfwidths.values())

    def test_two_seed_mean(self):
        agg = aggregate([_report(0.4), _report(0.6)])
        assert agg.engagement_rate == pytest.approx(0.5)
        assert agg.n_episodes == 20

    def test_single_report_has_no_halfwidths(self):
        agg = aggregate([_report(0.4)])
        assert agg.halfwidths is None and agg.safety_cost == 0.4

    def test_closed_form_halfwidth(self):
        values = [0.1, 0.25, 0.3, 0.7, 0.45]
        agg = aggregate([_report(v) for v in values])
        m = sum(values) / 5
        sd = math.sqrt(sum((v - m) ** 2 for v in values) / 4)
        assert agg.halfwidths["safety_cost"] == pytest.approx(1.96 * sd / math.sqrt(5), abs=1e-12)

    def test_mixed_modes(self):
        a, b = _report(0.1), _report(0.2)
        b.safety_mode = UNDISCOUNTED
        with pytest.raises(ValueError):
            aggregate([a, b])

    def test_evaluate_trajectories(self):
        trajs = [_traj([0, 4], [1, 0], [0.5, -0.5]), _traj([4, 4], [0, 0], [0.5, 0.5])]
        rep = evaluate_trajectories(trajs, discount=0.9, threshold_d=0.5, engage_actions=(0,), action_affect_map=VALENCE)
        assert rep.engagement_rate == 0.25
        assert rep.emotional_alignment == 0.5
        assert rep.safety_cost == 0.5
        assert rep.violation_probability == 0.5
        assert rep.n_episodes == 2
        assert all(h >= 0 for h in rep.halfwidths.values())
        assert MetricReport.from_dict(rep.to_dict()) == rep
