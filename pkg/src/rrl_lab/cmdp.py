"""Tabular constrained MDPs, trajectories and exact policy evaluation.

Everything stochastic in the package draws from :func:`make_rng`, a numpy
``Generator`` backed by PCG64, so a seed fully determines a run.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence, Union

import numpy as np

ROW_TOL = 1e-9


class CmdpError(ValueError):
    """Raised when a CMDP, policy or trajectory breaks an invariant."""


def make_rng(seed: int | Sequence[int] | np.random.SeedSequence) -> np.random.Generator:
    """PCG64 generator for ``seed`` (an int, an int sequence or a SeedSequence)."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class CmdpSpec:
    """Full tabular CMDP: ``transition[s, a, s']``, ``reward[s, a]``, ``cost[s, a]``.

    Arrays are copied and made read-only on construction. Use
    :func:`validate_cmdp` to check the probabilistic invariants.
    """

    transition: np.ndarray
    reward: np.ndarray
    cost: np.ndarray
    discount: float
    threshold_d: float = 0.0
    start: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("transition", "reward", "cost"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.start is None:
            start = np.zeros(self.transition.shape[0])
            start[0] = 1.0
        else:
            start = np.array(self.start, dtype=float)
        start.setflags(write=False)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "threshold_d", float(self.threshold_d))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_threshold(self, threshold_d: float) -> "CmdpSpec":
        return CmdpSpec(self.transition, self.reward, self.cost, self.discount, threshold_d, self.start)

    def to_dict(self) -> dict[str, Any]:
        return {
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "cost": self.cost.tolist(),
            "discount": self.discount,
            "threshold_d": self.threshold_d,
            "start": self.start.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CmdpSpec":
        return validate_cmdp(cls(**data))


def validate_cmdp(spec: CmdpSpec) -> CmdpSpec:
    """Return ``spec`` unchanged if it is a well-formed CMDP, else raise CmdpError."""
    P, R, C = spec.transition, spec.reward, spec.cost
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise CmdpError(f"transition must have shape (S, A, S), got {P.shape}")
    n_states, n_actions = P.shape[:2]
    if n_states < 1 or n_actions < 1:
        raise CmdpError("need at least one state and one action")
    for name, arr in (("reward", R), ("cost", C)):
        if arr.shape != (n_states, n_actions):
            raise CmdpError(f"{name} must have shape {(n_states, n_actions)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise CmdpError(f"{name} has non-finite entries")
    for s in range(n_states):
        for a in range(n_actions):
            row = P[s, a]
            if np.any(row < 0.0) or np.any(row > 1.0) or not np.all(np.isfinite(row)):
                raise CmdpError(f"transition row ({s},{a}) has entries outside [0,1]")
            total = row.sum()
            if abs(total - 1.0) > ROW_TOL:
                raise CmdpError(f"transition row ({s},{a}) sums to {total:.12g}")
    bad = np.argwhere(C < 0.0)
    if len(bad):
        s, a = bad[0]
        raise CmdpError(f"cost ({s},{a}) is negative: {C[s, a]}")
    if not 0.0 < spec.discount < 1.0:
        raise CmdpError(f"discount out of range (0,1): {spec.discount}")
    if not spec.threshold_d >= 0.0:
        raise CmdpError(f"threshold_d must be nonnegative, got {spec.threshold_d}")
    start = spec.start
    if start.shape != (n_states,) or np.any(start < 0) or abs(start.sum() - 1.0) > ROW_TOL:
        raise CmdpError("start distribution must be a probability vector over states")
    return spec


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """Stochastic stationary policy, ``action_probabilities[s, a]``."""

    action_probabilities: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.action_probabilities, dtype=float)
        if probs.ndim != 2:
            raise CmdpError("policy must be a (S, A) array")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise CmdpError("policy entries must lie in [0,1]")
        sums = probs.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            raise CmdpError(f"policy row {bad[0]} sums to {sums[bad[0]]:.12g}")
        probs.setflags(write=False)
        object.__setattr__(self, "action_probabilities", probs)

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "StationaryPolicy":
        probs = np.zeros((len(actions), n_actions))
        probs[np.arange(len(actions)), list(actions)] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "StationaryPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.action_probabilities == 0.0) | (self.action_probabilities == 1.0)))

    def greedy_actions(self) -> tuple[int, ...]:
        return tuple(int(a) for a in np.argmax(self.action_probabilities, axis=1))

    def sample(self, state: int, rng: np.random.Generator) -> int:
        row = self.action_probabilities[state]
        # inverse-CDF on one uniform keeps the draw count fixed per step
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(row), u, side="right"))
        return min(idx, len(row) - 1)

    def __call__(self, obs: Any, rng: np.random.Generator) -> int:
        return self.sample(operator.index(obs), rng)


@dataclass(frozen=True)
class Transition:
    """One environment step.

    ``reward`` is the primary (engagement) reward of the CMDP; ``r_eng`` and
    ``r_emo`` carry the separate channels agents weight into a composite.
    ``latent_e`` is the affective state *before* the step.
    """

    state: int
    action: int
    reward: float
    cost: float
    next_state: int
    r_eng: float = 0.0
    r_emo: float = 0.0
    violation: bool = False
    latent_e: float = 0.0
    terminal: bool = False


@dataclass(frozen=True)
class Trajectory:
    transitions: tuple[Transition, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "transitions", tuple(self.transitions))
        for i, (cur, nxt) in enumerate(zip(self.transitions, self.transitions[1:])):
            if cur.next_state != nxt.state:
                raise CmdpError(f"trajectory broken at step {i}: {cur.next_state} -> {nxt.state}")

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=float)

    @property
    def costs(self) -> np.ndarray:
        return np.array([t.cost for t in self.transitions], dtype=float)


def _discounted_sum(values: np.ndarray, discount: float) -> float:
    if len(values) == 0:
        return 0.0
    return float(np.dot(discount ** np.arange(len(values)), values))


def discounted_return(traj: Trajectory, discount: float) -> float:
    """Sum of ``discount**t * reward_t`` over the trajectory."""
    return _discounted_sum(traj.rewards, discount)


def discounted_cost(traj: Trajectory, discount: float) -> float:
    """Sum of ``discount**t * cost_t`` over the trajectory."""
    return _discounted_sum(traj.costs, discount)


def policy_matrices(spec: CmdpSpec, policy: StationaryPolicy) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Policy-induced ``(P_pi, r_pi, c_pi)``."""
    pi = policy.action_probabilities
    if pi.shape != (spec.n_states, spec.n_actions):
        raise CmdpError(f"policy shape {pi.shape} does not match CMDP {(spec.n_states, spec.n_actions)}")
    P_pi = np.einsum("sa,sat->st", pi, spec.transition)
    r_pi = np.einsum("sa,sa->s", pi, spec.reward)
    c_pi = np.einsum("sa,sa->s", pi, spec.cost)
    return P_pi, r_pi, c_pi


def exact_policy_values(spec: CmdpSpec, policy: StationaryPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``(I - discount * P_pi) V = r_pi`` for the reward and cost channels.

    Both right-hand sides go through a single LU factorisation with partial
    pivoting (LAPACK ``gesv``).
    """
    P_pi, r_pi, c_pi = policy_matrices(spec, policy)
    A = np.eye(spec.n_states) - spec.discount * P_pi
    try:
        sol = np.linalg.solve(A, np.column_stack([r_pi, c_pi]))
    except np.linalg.LinAlgError as exc:
        raise CmdpError("singular evaluation system; is discount inside (0,1)?") from exc
    return sol[:, 0], sol[:, 1]


def start_values(spec: CmdpSpec, policy: StationaryPolicy) -> tuple[float, float]:
    """Reward and cost values under the start distribution of ``spec``."""
    v_r, v_c = exact_policy_values(spec, policy)
    return float(spec.start @ v_r), float(spec.start @ v_c)


class Environment(Protocol):
    """Step contract shared by every environment.

    ``reset`` and ``step`` return an observation usable with
    ``operator.index`` (the discrete state index); ``step`` also returns the
    :class:`Transition` and whether the episode has ended.
    """

    n_states: int
    n_actions: int
    horizon: int

    def reset(self, rng: np.random.Generator) -> Any: ...

    def step(self, action: int, rng: np.random.Generator) -> tuple[Any, Transition, bool]: ...


Agent = Callable[[Any, np.random.Generator], int]


def rollout(
    env: Environment,
    policy: Union[StationaryPolicy, Agent],
    horizon: int,
    seed: int,
    *,
    env_rng: np.random.Generator | None = None,
    agent_rng: np.random.Generator | None = None,
) -> Trajectory:
    """Run one episode of at most ``horizon`` steps.

    Environment and agent draw from independent child streams of ``seed`` so
    that two agents run with the same seed see the same environment noise.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if env_rng is None or agent_rng is None:
        env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
        if env_rng is None:
            env_rng = make_rng(env_ss)
        if agent_rng is None:
            agent_rng = make_rng(agent_ss)
    obs = env.reset(env_rng)
    steps = []
    for _ in range(horizon):
        action = policy(obs, agent_rng)
        obs, transition, done = env.step(action, env_rng)
        steps.append(transition)
        if done:
            break
    return Trajectory(tuple(steps), seed)
