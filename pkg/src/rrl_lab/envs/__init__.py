from rrl_lab.envs.base import UserState, alignment_score
from rrl_lab.envs.synthetic import (
    ACTIONS,
    SyntheticEnvConfig,
    SyntheticUserEnv,
    UserProfile,
    cost_signal,
    discretize_state,
    emotional_transition,
    observe,
    reward_signals,
)
from rrl_lab.envs.tabular import TabularEnv
from rrl_lab.envs.toy import ADVERSARIAL_TOY, DEFAULT_TOY, ToyEnv, ToyEnvConfig, toy_env_build

__all__ = [
    "ACTIONS",
    "ADVERSARIAL_TOY",
    "DEFAULT_TOY",
    "SyntheticEnvConfig",
    "SyntheticUserEnv",
    "TabularEnv",
    "ToyEnv",
    "ToyEnvConfig",
    "UserProfile",
    "UserState",
    "alignment_score",
    "cost_signal",
    "discretize_state",
    "emotional_transition",
    "observe",
    "reward_signals",
    "toy_env_build",
]
