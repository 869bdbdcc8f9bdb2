"""Synthetic emotional-user simulator.

A simulated user carries a static profile ``(severity, responsiveness)``, an
exponentially weighted engagement history in [0, 1] and a latent affective
readiness ``e`` in [-1, +1]. The agent only sees a noisy reading of ``e``.

Per step (all draws happen every step, so two agents sharing a seed see the
same noise stream regardless of the actions they pick):

* rewards and cost are computed from the current latent state;
* ``e`` moves one profile-scaled step up or down (or toward 0 for
  neutral-valence content), see :func:`emotional_transition`;
* the history decays toward 1 if the user engaged, toward 0 otherwise;
* a fresh observation ``e + N(0, sigma_obs**2)`` is drawn and discretised.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np

from rrl_lab.cmdp import CmdpError, Transition
from rrl_lab.envs.base import UserState, alignment_score, sign

ACTIONS = ("check_in", "encourage_activity", "deliver_content", "escalate_support", "wait")
CHECK_IN, ENCOURAGE, DELIVER, ESCALATE, WAIT = range(5)


@dataclass(frozen=True)
class SyntheticEnvConfig:
    # affect dynamics
    p_raise: float = 0.7
    p_lower: float = 0.6
    env_noise: float = 0.1
    p_rebound: float = 0.5
    step_size: float = 0.25
    sigma_obs: float = 0.1
    # per-action menu, indexed like ACTIONS
    action_affect_map: tuple[int, ...] = (1, 1, 0, 1, -1)
    action_intensity: tuple[float, ...] = (1.0, 1.0, 0.0, 2.0, 0.0)
    engagement_payoff: tuple[float, ...] = (0.6, 0.8, 0.4, 1.0, 0.0)
    # r_eng = payoff * (readiness_floor + (1 - readiness_floor) * (e + 1) / 2)
    readiness_floor: float = 0.2
    # |e| at or below the deadband counts as affect-neutral for r_emo
    alignment_deadband: float = 0.0
    cost_penalty: float = 1.0
    distress_threshold: float = -0.25
    # user population and history
    severity_bounds: tuple[float, float] = (0.0, 1.0)
    responsiveness_bounds: tuple[float, float] = (0.5, 1.5)
    profile_cutpoints: tuple[float, ...] = (0.5,)
    initial_e_range: tuple[float, float] = (-0.5, 0.5)
    initial_history: float = 0.5
    ewma_decay: float = 0.8
    # episode and tabulation
    discount: float = 0.95
    threshold_d: float = 1.0
    horizon: int = 50
    e_bins: int = 5
    h_bins: int = 3

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        # closed interval: the degenerate ends give noiseless, predictable dynamics
        for name in ("p_raise", "p_lower", "env_noise", "p_rebound"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise CmdpError(f"{name} must lie in [0,1], got {v}")
        if self.sigma_obs < 0:
            raise CmdpError("sigma_obs must be >= 0")
        if self.e_bins < 1 or self.h_bins < 1:
            raise CmdpError("e_bins and h_bins must be >= 1")
        if self.horizon < 1:
            raise CmdpError("horizon must be >= 1")
        n = len(self.action_affect_map)
        if len(self.action_intensity) != n or len(self.engagement_payoff) != n:
            raise CmdpError("per-action tables must have equal length")
        if any(v not in (-1, 0, 1) for v in self.action_affect_map):
            raise CmdpError("action valences must be -1, 0 or +1")
        if any(not 0.0 <= p <= 1.0 for p in self.engagement_payoff):
            raise CmdpError("engagement payoffs must lie in [0,1]")
        if not 0.0 <= self.readiness_floor <= 1.0:
            raise CmdpError("readiness_floor must lie in [0,1]")
        if self.cost_penalty < 0 or any(i < 0 for i in self.action_intensity):
            raise CmdpError("cost penalty and intensities must be >= 0")
        if not 0.0 < self.ewma_decay < 1.0:
            raise CmdpError("ewma_decay must lie in (0,1)")
        if not 0.0 < self.discount < 1.0:
            raise CmdpError(f"discount out of range (0,1): {self.discount}")
        if list(self.profile_cutpoints) != sorted(self.profile_cutpoints):
            raise CmdpError("profile_cutpoints must be sorted")

    @property
    def n_actions(self) -> int:
        return len(self.action_affect_map)

    @property
    def profile_levels(self) -> int:
        return len(self.profile_cutpoints) + 1

    @property
    def n_states(self) -> int:
        return self.e_bins * self.h_bins * self.profile_levels

    @property
    def engage_actions(self) -> tuple[int, ...]:
        return tuple(a for a, pay in enumerate(self.engagement_payoff) if pay > 0)

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SyntheticEnvConfig":
        return cls(**data)


@dataclass(frozen=True)
class UserProfile:
    severity: float
    responsiveness: float

    @property
    def attributes(self) -> tuple[float, float]:
        return (self.severity, self.responsiveness)


def _is_sensitive(valence: int, e: float, config: SyntheticEnvConfig) -> bool:
    return valence > 0 and e >= config.distress_threshold


def emotional_transition(
    e: float, action: int, profile: UserProfile, config: SyntheticEnvConfig, rng: np.random.Generator
) -> float:
    """Next latent readiness.

    Sensitive engagement (positive valence while not distressed) raises ``e``
    with probability ``p_raise``; negative valence, or positive valence under
    distress, lowers it with probability ``p_lower``; neutral content drifts
    it toward 0 with probability ``p_rebound``. The remaining mass leaves
    ``e`` unchanged. With probability ``env_noise`` the direction is replaced
    by a fair coin. Upward steps scale with responsiveness, downward steps with
    ``1 + severity``.
    """
    u_move, u_noise, u_dir = rng.random(3)
    valence = config.action_affect_map[action]
    if _is_sensitive(valence, e, config):
        direction, p_move = 1, config.p_raise
    elif valence != 0:
        direction, p_move = -1, config.p_lower
    else:
        direction, p_move = -sign(e), config.p_rebound
    if u_noise < config.env_noise:
        direction = 1 if u_dir < 0.5 else -1
    if u_move >= p_move or direction == 0:
        return e
    if direction > 0:
        step = config.step_size * profile.responsiveness
    else:
        step = config.step_size * (1.0 + profile.severity)
    if valence == 0 and u_noise >= config.env_noise:
        # rebound stops at neutral instead of overshooting
        step = min(step, abs(e))
    return float(min(1.0, max(-1.0, e + direction * step)))


def observe(e: float, sigma_obs: float, rng: np.random.Generator) -> float:
    """Noisy affect reading ``e + N(0, sigma_obs**2)``; not clipped."""
    if sigma_obs < 0:
        raise ValueError("sigma_obs must be >= 0")
    return float(e + sigma_obs * rng.standard_normal())


def reward_signals(state: UserState, action: int, config: SyntheticEnvConfig) -> tuple[float, float]:
    """``(r_eng, r_emo)`` for taking ``action`` in ``state``; r_eng lies in [0, 1]."""
    readiness = (state.latent_e + 1.0) / 2.0
    floor = config.readiness_floor
    r_eng = config.engagement_payoff[action] * (floor + (1.0 - floor) * readiness)
    r_emo = alignment_score(state.latent_e, config.action_affect_map[action], config.alignment_deadband)
    return float(r_eng), float(r_emo)


def cost_signal(state: UserState, action: int, config: SyntheticEnvConfig) -> float:
    """Penalty for emotionally engaging a distressed user, scaled by action intensity."""
    if config.action_affect_map[action] > 0 and state.latent_e < config.distress_threshold:
        return float(config.cost_penalty * config.action_intensity[action])
    return 0.0


def _bin(value: float, lo: float, hi: float, n_bins: int) -> int:
    edges = np.linspace(lo, hi, n_bins + 1)
    clipped = min(hi, max(lo, value))
    # closed-lower/open-upper bins, last bin closed
    return min(int(np.searchsorted(edges, clipped, side="right")) - 1, n_bins - 1)


def discretize_state(profile: UserProfile, history: float, observation: float, config: SyntheticEnvConfig) -> int:
    """Row-major index over (profile level, history bin, affect bin)."""
    level = int(np.searchsorted(config.profile_cutpoints, profile.severity, side="right"))
    h_bin = _bin(history, 0.0, 1.0, config.h_bins)
    e_bin = _bin(observation, -1.0, 1.0, config.e_bins)
    return (level * config.h_bins + h_bin) * config.e_bins + e_bin


def update_history(history: float, engaged: bool, decay: float) -> float:
    return decay * history + (1.0 - decay) * float(engaged)


class SyntheticUserEnv:
    """Episodic simulator implementing the common step contract."""

    engage_action = CHECK_IN
    disengage_action = WAIT

    def __init__(self, config: SyntheticEnvConfig | None = None, horizon: int | None = None):
        config = config or SyntheticEnvConfig()
        if horizon is not None:
            config = replace(config, horizon=horizon)
        self.config = config
        self.horizon = config.horizon
        self.discount = config.discount
        self.threshold_d = config.threshold_d
        self.n_states = config.n_states
        self.n_actions = config.n_actions
        self.engage_actions = config.engage_actions
        self.action_affect_map = config.action_affect_map
        self.distress_threshold = config.distress_threshold
        self.profile: UserProfile | None = None
        self.state: UserState | None = None
        self._t = 0
        self._done = True

    def reset(self, rng: np.random.Generator) -> UserState:
        cfg = self.config
        u_sev, u_resp, u_e = rng.random(3)
        lo, hi = cfg.severity_bounds
        severity = lo + (hi - lo) * u_sev
        lo, hi = cfg.responsiveness_bounds
        responsiveness = lo + (hi - lo) * u_resp
        lo, hi = cfg.initial_e_range
        e = lo + (hi - lo) * u_e
        self.profile = UserProfile(float(severity), float(responsiveness))
        self.state = self._make_state(cfg.initial_history, float(e), rng)
        self._t = 0
        self._done = False
        return self.state

    def _make_state(self, history: float, e: float, rng: np.random.Generator) -> UserState:
        o = observe(e, self.config.sigma_obs, rng)
        idx = discretize_state(self.profile, history, o, self.config)
        return UserState(self.profile.attributes, history, e, o, idx)

    def step(self, action: int, rng: np.random.Generator) -> tuple[UserState, Transition, bool]:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        cfg = self.config
        s = self.state
        r_eng, r_emo = reward_signals(s, action, cfg)
        cost = cost_signal(s, action, cfg)
        e_next = emotional_transition(s.latent_e, action, self.profile, cfg, rng)
        engaged = action in self.engage_actions and s.latent_e >= cfg.distress_threshold
        h_next = update_history(s.history, engaged, cfg.ewma_decay)
        nxt = self._make_state(h_next, e_next, rng)
        tr = Transition(
            state=s.index,
            action=action,
            reward=r_eng,
            cost=cost,
            next_state=nxt.index,
            r_eng=r_eng,
            r_emo=r_emo,
            violation=cost > 0.0,
            latent_e=s.latent_e,
        )
        self.state = nxt
        self._t += 1
        self._done = self._t >= self.horizon
        return nxt, tr, self._done
