"""Exact ground truth for small CMDPs by enumerating deterministic policies."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from rrl_lab.cmdp import CmdpError, CmdpSpec, StationaryPolicy, start_values

MAX_POLICIES = 10**6
COST_TOL = 1e-6
MAX_BISECTIONS = 100


class InfeasibleError(CmdpError):
    pass


@dataclass(frozen=True)
class PolicyValuePoint:
    policy: StationaryPolicy
    value_reward: float
    value_cost: float
    deterministic: bool = True

    @property
    def actions(self) -> tuple[int, ...]:
        return self.policy.greedy_actions()


@dataclass(frozen=True)
class ConstrainedSolution:
    """Optimum of ``max value s.t. cost <= d``.

    When ``alternative`` is set, ``policy`` is followed for a whole
    episode with probability ``mixture_weight`` and ``alternative`` otherwise.
    """

    optimal_value: float
    optimal_cost: float
    policy: PolicyValuePoint
    lambda_star: float
    alternative: PolicyValuePoint | None = None
    mixture_weight: float = 1.0

    @property
    def is_mixture(self) -> bool:
        return self.alternative is not None


def enumerate_policies(spec: CmdpSpec) -> list[PolicyValuePoint]:
    """Every deterministic stationary policy, evaluated at the start distribution."""
    n_policies = spec.n_actions**spec.n_states
    if n_policies > MAX_POLICIES:
        raise CmdpError(f"{n_policies} deterministic policies exceeds the enumeration guard of {MAX_POLICIES}")
    points = []
    for actions in itertools.product(range(spec.n_actions), repeat=spec.n_states):
        pi = StationaryPolicy.deterministic(actions, spec.n_actions)
        v, c = start_values(spec, pi)
        points.append(PolicyValuePoint(pi, v, c, True))
    return points


def _best(values: np.ndarray, costs: np.ndarray, lam: float) -> int:
    # ties on the scalarised value go to the cheaper policy, then enumeration order
    scal = values - lam * costs
    top = np.flatnonzero(scal >= scal.max() - 1e-12 * max(1.0, abs(scal.max())))
    return int(top[np.lexsort((top, costs[top]))[0]])


def constrained_optimum(spec: CmdpSpec, points: list[PolicyValuePoint] | None = None) -> ConstrainedSolution:
    """Constrained optimum by bisection on the multiplier.

    For each multiplier the best deterministic policy under ``value -
    lam * cost`` is found from the enumeration. If the unconstrained optimum is
    feasible it is returned with ``lambda_star = 0``. Otherwise the two
    policies bracketing the threshold are mixed at episode start so the mixed
    cost equals ``d`` exactly.
    """
    points = points if points is not None else enumerate_policies(spec)
    d = spec.threshold_d
    values = np.array([p.value_reward for p in points])
    costs = np.array([p.value_cost for p in points])
    if costs.min() > d + 1e-9:
        raise InfeasibleError(f"min-cost policy has cost {costs.min():.6g} > d = {d:.6g}")

    i0 = _best(values, costs, 0.0)
    if costs[i0] <= d + 1e-9:
        return ConstrainedSolution(values[i0], costs[i0], points[i0], 0.0)

    lam_lo, lam_hi = 0.0, 1.0
    while costs[_best(values, costs, lam_hi)] > d + 1e-9:
        lam_lo, lam_hi = lam_hi, lam_hi * 2.0
        if lam_hi > 1e15:
            raise InfeasibleError("could not bracket the multiplier")
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lam_lo + lam_hi)
        i = _best(values, costs, mid)
        if costs[i] > d + 1e-9:
            lam_lo = mid
        else:
            lam_hi = mid
            if d - costs[i] <= COST_TOL:
                break

    i_hi = _best(values, costs, lam_hi)
    i_lo = _best(values, costs, lam_lo)
    if d - costs[i_hi] <= COST_TOL:
        return ConstrainedSolution(values[i_hi], costs[i_hi], points[i_hi], lam_hi)
    # weight on the infeasible (higher-value) policy
    w = (d - costs[i_hi]) / (costs[i_lo] - costs[i_hi])
    value = w * values[i_lo] + (1.0 - w) * values[i_hi]
    cost = w * costs[i_lo] + (1.0 - w) * costs[i_hi]
    return ConstrainedSolution(value, cost, points[i_lo], 0.5 * (lam_lo + lam_hi), points[i_hi], float(w))


def exact_pareto_front(spec: CmdpSpec, points: list[PolicyValuePoint] | None = None) -> list[PolicyValuePoint]:
    """Deterministic policies not dominated in (higher value, lower cost), by ascending cost.

    Policies tied in both coordinates are represented once (the first in
    enumeration order).
    """
    points = points if points is not None else enumerate_policies(spec)
    order = sorted(range(len(points)), key=lambda i: (points[i].value_cost, -points[i].value_reward, i))
    front: list[PolicyValuePoint] = []
    best_value = -np.inf
    for i in order:
        p = points[i]
        if p.value_reward > best_value:
            front.append(p)
            best_value = p.value_reward
    return front
