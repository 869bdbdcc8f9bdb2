"""Evaluation metrics over trajectories and across seeded runs."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from rrl_lab.cmdp import Trajectory, discounted_cost, discounted_return
from rrl_lab.envs.base import sign

DISCOUNTED = "discounted"
UNDISCOUNTED = "undiscounted"
Z_95 = 1.96
METRIC_FIELDS = (
    "engagement_rate",
    "emotional_alignment",
    "safety_cost",
    "violation_probability",
    "mean_return",
)


def _require(trajs: Sequence) -> None:
    if len(trajs) == 0:
        raise ValueError("need at least one trajectory")


def engagement_rate(traj: Trajectory, engage_actions: Iterable[int]) -> float:
    """Fraction of steps whose action is in ``engage_actions``."""
    _require(traj.transitions)
    engage = set(engage_actions)
    return sum(t.action in engage for t in traj) / len(traj)


def emotional_alignment(traj: Trajectory, action_affect_map: Sequence[int]) -> float:
    """Fraction of steps with ``sign(e) * sign(valence(a)) > 0``; zero signs are not aligned."""
    _require(traj.transitions)
    hits = sum(sign(t.latent_e) * sign(action_affect_map[t.action]) > 0 for t in traj)
    return hits / len(traj)


def episode_cost(traj: Trajectory, discount: float, mode: str = DISCOUNTED) -> float:
    if mode == DISCOUNTED:
        return discounted_cost(traj, discount)
    if mode == UNDISCOUNTED:
        return float(traj.costs.sum())
    raise ValueError(f"unknown safety-cost mode {mode!r}")


def safety_cost(trajectories: Sequence[Trajectory], discount: float, mode: str = DISCOUNTED) -> float:
    """Mean per-episode cost, discounted (default) or plain sum."""
    _require(trajectories)
    return float(np.mean([episode_cost(t, discount, mode) for t in trajectories]))


def violation_probability(trajectories: Sequence[Trajectory], discount: float, threshold_d: float) -> float:
    """Fraction of episodes whose discounted cost exceeds ``threshold_d``."""
    _require(trajectories)
    return sum(discounted_cost(t, discount) > threshold_d for t in trajectories) / len(trajectories)


def default_reference(points: np.ndarray, margin: float = 0.05) -> np.ndarray:
    """Componentwise worst value minus ``margin`` of the observed range (or of max(|worst|, 1) if flat)."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    span = hi - lo
    span = np.where(span > 0, span, np.maximum(np.abs(lo), 1.0))
    return lo - margin * span


def _exclusive_volumes(points: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact per-point exclusive hypervolume (maximisation) on the coordinate grid."""
    n, dim = points.shape
    axes = [np.unique(np.concatenate([[ref[k]], points[:, k]])) for k in range(dim)]
    dominated = np.ones((n,) + tuple(len(ax) - 1 for ax in axes), dtype=bool)
    volume = np.ones(dominated.shape[1:])
    for k, ax in enumerate(axes):
        shape = [1] * dim
        shape[k] = len(ax) - 1
        upper = ax[1:].reshape(shape)
        dominated &= points[:, k].reshape((n,) + (1,) * dim) >= upper[None]
        volume = volume * np.diff(ax).reshape(shape)
    count = dominated.sum(axis=0)
    total = float(volume[count > 0].sum())
    sole = count == 1
    exclusive = np.array([volume[sole & dominated[i]].sum() for i in range(n)])
    return exclusive, total


def _nondominated(points: np.ndarray) -> np.ndarray:
    """Boolean mask of rows not weakly dominated by a different row."""
    ge = np.all(points[:, None, :] >= points[None, :, :], axis=2)
    gt = np.any(points[:, None, :] > points[None, :, :], axis=2)
    return ~np.any(ge & gt, axis=0)


def hypervolume(points: Sequence[Sequence[float]], reference_point: Sequence[float]) -> float:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return _exclusive_volumes(pts, np.asarray(reference_point, dtype=float))[1]


def pareto_index(
    points: Sequence[Sequence[float]], reference_point: Sequence[float] | None = None
) -> np.ndarray:
    """Normalised exclusive hypervolume contribution of each point (all objectives maximised).

    Contributions are computed over the non-dominated subset, so dominated
    points score 0 and adding one leaves every other index unchanged.
    Identical points share their joint contribution equally. Volume
    dominated by two or more points belongs to none of them, so the indices
    sum to at most 1.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    ref = default_reference(pts) if reference_point is None else np.asarray(reference_point, dtype=float)
    if ref.shape != (pts.shape[1],):
        raise ValueError(f"reference point must have {pts.shape[1]} coordinates")
    if np.any(pts < ref):
        raise ValueError("reference point must be weakly dominated by every point")
    unique, inverse, counts = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    inverse = np.ravel(inverse)
    front = _nondominated(unique)
    exclusive = np.zeros(len(unique))
    exclusive[front], total = _exclusive_volumes(unique[front], ref)
    if total <= 0:
        raise ValueError("reference point leaves zero dominated volume")
    return exclusive[inverse] / counts[inverse] / total


@dataclass
class MetricReport:
    engagement_rate: float
    emotional_alignment: float
    safety_cost: float
    violation_probability: float
    n_episodes: int
    mean_return: float
    safety_mode: str = DISCOUNTED
    halfwidths: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(**data)


def _halfwidth(values: np.ndarray) -> float:
    if len(values) < 2 or np.all(values == values[0]):
        return 0.0
    return float(Z_95 * values.std(ddof=1) / math.sqrt(len(values)))


def evaluate_trajectories(
    trajectories: Sequence[Trajectory],
    *,
    discount: float,
    threshold_d: float,
    engage_actions: Iterable[int],
    action_affect_map: Sequence[int],
    mode: str = DISCOUNTED,
) -> MetricReport:
    """Metrics of one run's evaluation episodes; halfwidths are across episodes."""
    _require(trajectories)
    engage_actions = tuple(engage_actions)
    per_ep = {
        "engagement_rate": np.array([engagement_rate(t, engage_actions) for t in trajectories]),
        "emotional_alignment": np.array([emotional_alignment(t, action_affect_map) for t in trajectories]),
        "safety_cost": np.array([episode_cost(t, discount, mode) for t in trajectories]),
        "violation_probability": np.array([discounted_cost(t, discount) > threshold_d for t in trajectories], float),
        "mean_return": np.array([discounted_return(t, discount) for t in trajectories]),
    }
    return MetricReport(
        engagement_rate=float(per_ep["engagement_rate"].mean()),
        emotional_alignment=float(per_ep["emotional_alignment"].mean()),
        safety_cost=float(per_ep["safety_cost"].mean()),
        violation_probability=float(per_ep["violation_probability"].mean()),
        n_episodes=len(trajectories),
        mean_return=float(per_ep["mean_return"].mean()),
        safety_mode=mode,
        halfwidths={k: _halfwidth(v) for k, v in per_ep.items()},
    )


def aggregate(reports: Sequence[MetricReport]) -> MetricReport:
    """Mean across seeds with normal-approximation 95% halfwidths.

    With a single report the halfwidths are ``None``.
    """
    if not reports:
        raise ValueError("need at least one report")
    modes = {r.safety_mode for r in reports}
    if len(modes) != 1:
        raise ValueError(f"cannot aggregate mixed safety-cost modes {sorted(modes)}")
    cols = {k: np.array([getattr(r, k) for r in reports], dtype=float) for k in METRIC_FIELDS}
    halfwidths = {k: _halfwidth(v) for k, v in cols.items()} if len(reports) >= 2 else None
    return MetricReport(
        **{k: float(v.mean()) for k, v in cols.items()},
        n_episodes=sum(r.n_episodes for r in reports),
        safety_mode=modes.pop(),
        halfwidths=halfwidths,
    )
