"""Two-state engage/disengage CMDP with a closed-form tabular specification."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from rrl_lab.cmdp import CmdpError, CmdpSpec, Transition, validate_cmdp
from rrl_lab.envs.base import UserState, alignment_score

NEUTRAL, EMOTIONAL = 0, 1
ENGAGE, DISENGAGE = 0, 1
STATE_NAMES = ("neutral", "emotional")
ACTION_NAMES = ("engage", "disengage")


@dataclass(frozen=True)
class ToyEnvConfig:
    """Rewards, costs and dynamics of the two-state CMDP.

    ``p_to_emotional[s][a]`` is the probability that the next state is
    emotional after taking action ``a`` in state ``s``. Rewards and costs not
    named ``r0``/``c1`` are the remaining (state, action) pairs.
    """

    r0: float = 1.0
    c1: float = 1.0
    r_emotional_engage: float = 1.0
    r_neutral_disengage: float = 0.0
    r_emotional_disengage: float = 0.0
    c_neutral_engage: float = 0.0
    c_neutral_disengage: float = 0.0
    c_emotional_disengage: float = 0.0
    p_to_emotional: tuple[tuple[float, float], tuple[float, float]] = ((0.1, 0.05), (0.9, 0.3))
    discount: float = 0.9
    threshold_d: float = 1.0

    def __post_init__(self) -> None:
        p = tuple(tuple(float(x) for x in row) for row in self.p_to_emotional)
        object.__setattr__(self, "p_to_emotional", p)
        if len(p) != 2 or any(len(row) != 2 for row in p):
            raise CmdpError("p_to_emotional must be 2x2")
        if any(not 0.0 <= x <= 1.0 for row in p for x in row):
            raise CmdpError("p_to_emotional entries must lie in [0,1]")
        costs = (self.c1, self.c_neutral_engage, self.c_neutral_disengage, self.c_emotional_disengage)
        if any(c < 0 for c in costs):
            raise CmdpError("toy costs must be nonnegative")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["p_to_emotional"] = [list(row) for row in self.p_to_emotional]
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ToyEnvConfig":
        data = dict(data)
        if "p_to_emotional" in data:
            data["p_to_emotional"] = tuple(tuple(row) for row in data["p_to_emotional"])
        return cls(**data)


DEFAULT_TOY = ToyEnvConfig()

# Engaging in the emotional state pays best and is the only costly move.
ADVERSARIAL_TOY = ToyEnvConfig(r0=1.0, c1=1.0, r_emotional_engage=2.0, threshold_d=0.2)


def toy_env_build(config: ToyEnvConfig) -> CmdpSpec:
    """Tabular CMDP for ``config``; start state is neutral."""
    reward = np.array(
        [[config.r0, config.r_neutral_disengage], [config.r_emotional_engage, config.r_emotional_disengage]]
    )
    cost = np.array(
        [[config.c_neutral_engage, config.c_neutral_disengage], [config.c1, config.c_emotional_disengage]]
    )
    p_emo = np.array(config.p_to_emotional)
    transition = np.stack([1.0 - p_emo, p_emo], axis=-1)
    return validate_cmdp(CmdpSpec(transition, reward, cost, config.discount, config.threshold_d, start=[1.0, 0.0]))


class ToyEnv:
    """Episodic simulator of the two-state CMDP.

    Observations are :class:`UserState` values whose affect is +1 in the
    neutral state and -1 in the emotional one, so the rule-based baseline and
    the alignment metric apply unchanged.
    """

    engage_actions = (ENGAGE,)
    action_affect_map = (1, -1)
    engage_action = ENGAGE
    disengage_action = DISENGAGE
    distress_threshold = 0.0
    n_actions = 2
    n_states = 2

    def __init__(self, config: ToyEnvConfig = DEFAULT_TOY, horizon: int = 150):
        self.config = config
        self.spec = toy_env_build(config)
        self.horizon = horizon
        self.discount = config.discount
        self.threshold_d = config.threshold_d
        self._state = NEUTRAL
        self._t = 0
        self._done = True

    @staticmethod
    def _user_state(s: int) -> UserState:
        e = 1.0 if s == NEUTRAL else -1.0
        return UserState(profile=(), history=0.0, latent_e=e, observed=e, index=s)

    def reset(self, rng: np.random.Generator) -> UserState:
        self._state = NEUTRAL
        self._t = 0
        self._done = False
        return self._user_state(self._state)

    def step(self, action: int, rng: np.random.Generator) -> tuple[UserState, Transition, bool]:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        s = self._state
        spec = self.spec
        nxt = EMOTIONAL if rng.random() < spec.transition[s, action, EMOTIONAL] else NEUTRAL
        reward = float(spec.reward[s, action])
        cost = float(spec.cost[s, action])
        e = 1.0 if s == NEUTRAL else -1.0
        tr = Transition(
            state=s,
            action=action,
            reward=reward,
            cost=cost,
            next_state=nxt,
            r_eng=reward,
            r_emo=float(alignment_score(e, self.action_affect_map[action])),
            violation=cost > 0.0,
            latent_e=e,
        )
        self._state = nxt
        self._t += 1
        self._done = self._t >= self.horizon
        return self._user_state(nxt), tr, self._done
