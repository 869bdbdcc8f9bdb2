"""Tabular learners: rule-based baseline, Q-learning baselines and the
Lagrangian-constrained learner.

All learners share :func:`_train`; the variants differ only in the reward
weights they scalarise with and whether the multiplier is allowed to move.
That keeps runs that should coincide (zero cost, slack threshold) bit-identical.
"""

from __future__ import annotations

import math
import operator
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from rrl_lab.cmdp import StationaryPolicy, Trajectory, Transition, discounted_cost, make_rng, rollout
from rrl_lab.envs.base import UserState

ENGAGEMENT_ONLY = "engagement_only"
PENALTY_SHAPED = "penalty_shaped"
RRL = "rrl"
RULE_BASED = "rule_based"
AGENT_KINDS = (RULE_BASED, ENGAGEMENT_ONLY, PENALTY_SHAPED, RRL)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class CompositeWeights:
    w_eng: float = 1.0
    w_emo: float = 0.0
    w_safety: float = 0.0

    def __post_init__(self) -> None:
        ws = (self.w_eng, self.w_emo, self.w_safety)
        if any(w < 0 for w in ws):
            raise ValueError(f"weights must be nonnegative, got {ws}")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one weight must be positive")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_eng, self.w_emo, self.w_safety)


def composite_reward(r_eng: float, r_emo: float, violation: bool, w: CompositeWeights) -> float:
    """Weighted engagement plus alignment, minus a flat penalty on violations."""
    return w.w_eng * r_eng + w.w_emo * r_emo - w.w_safety * (1.0 if violation else 0.0)


def lagrangian_scalarize(r: float, c: float, lam: float) -> float:
    """Per-step Lagrangian signal ``r - lam * c``.

    The ``lam * d`` offset is constant per episode and does not enter the step
    signal.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return r - lam * c


@dataclass(frozen=True)
class LagrangeState:
    lam: float = 0.0
    dual_step_size: float = 0.05
    threshold_d: float = 1.0

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not self.dual_step_size > 0:
            raise ValueError("dual_step_size must be positive")
        if not self.threshold_d >= 0:
            raise ValueError("threshold_d must be nonnegative")


def dual_update(ls: LagrangeState, estimated_cost: float) -> LagrangeState:
    """Projected dual ascent: ``lam <- max(0, lam + step * (C_hat - d))``."""
    lam = ls.lam + ls.dual_step_size * (estimated_cost - ls.threshold_d)
    return replace(ls, lam=max(0.0, lam))


def greedy_action(q_row: np.ndarray) -> int:
    # np.argmax returns the first maximiser, i.e. ties go to the lowest index
    return int(np.argmax(q_row))


def epsilon_greedy(q_row: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability ``epsilon``, else greedy.

    Exactly two uniforms are drawn per call so the random stream does not
    depend on the branch taken.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0,1]")
    u_explore, u_action = rng.random(2)
    if u_explore < epsilon:
        return min(int(u_action * len(q_row)), len(q_row) - 1)
    return greedy_action(q_row)


@dataclass
class DualCritic:
    """Tabular critics for the scalarised reward and the raw cost."""

    q_reward: np.ndarray
    q_cost: np.ndarray
    learning_rate: float

    @classmethod
    def zeros(cls, n_states: int, n_actions: int, learning_rate: float) -> "DualCritic":
        return cls(np.zeros((n_states, n_actions)), np.zeros((n_states, n_actions)), learning_rate)

    def greedy_policy(self) -> StationaryPolicy:
        n_actions = self.q_reward.shape[1]
        return StationaryPolicy.deterministic([greedy_action(row) for row in self.q_reward], n_actions)


def q_update(critic: DualCritic, transition: Transition, scalarized: float, discount: float) -> DualCritic:
    """One-step TD update of both critics, in place.

    The bootstrap action is greedy on the scalarised critic and is shared by
    the cost critic, so ``q_cost`` tracks the cost of the policy ``q_reward``
    currently prefers.
    """
    s, a, s2 = transition.state, transition.action, transition.next_state
    lr = critic.learning_rate
    if transition.terminal:
        target_r, target_c = scalarized, transition.cost
    else:
        a2 = greedy_action(critic.q_reward[s2])
        target_r = scalarized + discount * critic.q_reward[s2, a2]
        target_c = transition.cost + discount * critic.q_cost[s2, a2]
    critic.q_reward[s, a] += lr * (target_r - critic.q_reward[s, a])
    critic.q_cost[s, a] += lr * (target_c - critic.q_cost[s, a])
    return critic


def rule_based_policy(state: UserState, distress_threshold: float, engage_action: int, disengage_action: int) -> int:
    """Heuristic baseline: back off when the observed readiness looks distressed."""
    if state.observed < distress_threshold:
        return disengage_action
    return engage_action


class RuleBasedAgent:
    """Rule-based baseline bound to an environment's action menu."""

    def __init__(self, env: Any):
        self.distress_threshold = env.distress_threshold
        self.engage_action = env.engage_action
        self.disengage_action = env.disengage_action

    def __call__(self, obs: UserState, rng: np.random.Generator) -> int:
        return rule_based_policy(obs, self.distress_threshold, self.engage_action, self.disengage_action)


class GreedyAgent:
    """Acts greedily on a Q table; exploration off."""

    def __init__(self, q: np.ndarray):
        self.q = np.array(q)

    def __call__(self, obs: Any, rng: np.random.Generator) -> int:
        return greedy_action(self.q[operator.index(obs)])


class EpsilonGreedyAgent:
    def __init__(self, q: np.ndarray, epsilon: float):
        self.q = q
        self.epsilon = epsilon

    def __call__(self, obs: Any, rng: np.random.Generator) -> int:
        return epsilon_greedy(self.q[operator.index(obs)], self.epsilon, rng)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 200
    batch_episodes: int = 8
    learning_rate: float = 0.1
    epsilon_start: float = 0.3
    epsilon_end: float = 0.01
    weights: CompositeWeights = field(default_factory=CompositeWeights)
    lagrange: LagrangeState = field(default_factory=LagrangeState)

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.batch_episodes < 1:
            raise ValueError("iterations and batch_episodes must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 < epsilon_end <= epsilon_start <= 1")

    def epsilon(self, iteration: int) -> float:
        """Geometric decay from ``epsilon_start`` (first iteration) to ``epsilon_end`` (last)."""
        if self.iterations == 1:
            return self.epsilon_start
        frac = iteration / (self.iterations - 1)
        return self.epsilon_start * (self.epsilon_end / self.epsilon_start) ** frac

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        data = dict(data)
        if "weights" in data:
            data["weights"] = CompositeWeights(**data["weights"])
        if "lagrange" in data:
            data["lagrange"] = LagrangeState(**data["lagrange"])
        return cls(**data)


@dataclass
class TrainReport:
    mean_return: list[float]
    mean_cost: list[float]
    lam: list[float]
    violation: list[bool]
    q_reward: np.ndarray
    q_cost: np.ndarray

    @property
    def iterations(self) -> int:
        return len(self.mean_return)

    @property
    def policy(self) -> StationaryPolicy:
        n_actions = self.q_reward.shape[1]
        return StationaryPolicy.deterministic([greedy_action(row) for row in self.q_reward], n_actions)

    def agent(self) -> GreedyAgent:
        return GreedyAgent(self.q_reward)

    def series(self) -> dict[str, list]:
        return {
            "iteration": list(range(1, self.iterations + 1)),
            "mean_return": list(self.mean_return),
            "mean_cost": list(self.mean_cost),
            "lambda": list(self.lam),
            "violation": [int(v) for v in self.violation],
        }

    def to_dict(self) -> dict[str, Any]:
        d = self.series()
        d["greedy_actions"] = list(self.policy.greedy_actions())
        return d


def episode_seed(run_seed: int, stream: int, index: int) -> int:
    """64-bit seed for episode ``index`` of ``stream`` (0 = training, 1 = evaluation)."""
    ss = np.random.SeedSequence([int(run_seed) & (2**64 - 1), stream, index])
    return int(ss.generate_state(1, np.uint64)[0])


TRAIN_STREAM = 0
EVAL_STREAM = 1


def _discounted(values: Sequence[float], discount: float) -> float:
    total, g = 0.0, 1.0
    for v in values:
        total += g * v
        g *= discount
    return total


def _train(env: Any, config: TrainConfig, seed: int, weights: CompositeWeights, dual: bool) -> TrainReport:
    discount = env.discount
    critic = DualCritic.zeros(env.n_states, env.n_actions, config.learning_rate)
    ls = config.lagrange
    returns, costs, lams, violations = [], [], [], []
    episode = 0
    for it in range(config.iterations):
        agent = EpsilonGreedyAgent(critic.q_reward, config.epsilon(it))
        batch: list[Trajectory] = []
        for _ in range(config.batch_episodes):
            batch.append(rollout(env, agent, env.horizon, episode_seed(seed, TRAIN_STREAM, episode)))
            episode += 1
        lam = ls.lam
        ep_returns, ep_costs = [], []
        for traj in batch:
            composite = [composite_reward(t.r_eng, t.r_emo, t.violation, weights) for t in traj]
            ep_returns.append(_discounted(composite, discount))
            ep_costs.append(discounted_cost(traj, discount))
            for t, r in zip(traj, composite):
                q_update(critic, t, lagrangian_scalarize(r, t.cost, lam), discount)
        if not (np.all(np.isfinite(critic.q_reward)) and np.all(np.isfinite(critic.q_cost))):
            bad = np.argwhere(~np.isfinite(critic.q_reward) | ~np.isfinite(critic.q_cost))[0]
            raise TrainingError(f"non-finite critic entry at (state, action)={tuple(bad)} in iteration {it + 1}, lambda={lam}")
        r_hat = float(np.mean(ep_returns))
        c_hat = float(np.mean(ep_costs))
        if dual:
            ls = dual_update(ls, c_hat)
        returns.append(r_hat)
        costs.append(c_hat)
        lams.append(ls.lam)
        violations.append(c_hat > ls.threshold_d)
    return TrainReport(returns, costs, lams, violations, critic.q_reward.copy(), critic.q_cost.copy())


def train_rrl(env: Any, config: TrainConfig, seed: int) -> TrainReport:
    """Lagrangian-constrained Q-learning.

    Each iteration collects ``batch_episodes`` epsilon-greedy episodes,
    estimates the batch-mean discounted composite return and cost, updates
    the critics on ``composite - lambda * cost`` and then takes one projected
    dual-ascent step on lambda with the cost estimate.
    """
    return _train(env, config, seed, config.weights, dual=True)


def train_baseline(env: Any, variant: str, config: TrainConfig, seed: int) -> TrainReport:
    """Unconstrained baselines; lambda is pinned at 0 whatever the config says.

    ``engagement_only`` trains on the engagement reward alone and ignores the
    configured weights; ``penalty_shaped`` uses the full composite reward.
    """
    frozen = replace(config, lagrange=replace(config.lagrange, lam=0.0))
    if variant == ENGAGEMENT_ONLY:
        return _train(env, frozen, seed, CompositeWeights(1.0, 0.0, 0.0), dual=False)
    if variant == PENALTY_SHAPED:
        return _train(env, frozen, seed, config.weights, dual=False)
    raise ValueError(f"unknown baseline variant {variant!r}")


def evaluate(env: Any, agent: Any, run_seed: int, n_episodes: int = 200) -> list[Trajectory]:
    """Exploration-free evaluation episodes on the evaluation seed stream."""
    return [rollout(env, agent, env.horizon, episode_seed(run_seed, EVAL_STREAM, k)) for k in range(n_episodes)]
