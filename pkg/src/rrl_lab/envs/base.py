from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class UserState:
    """Emotion-informed state ``[profile, history, affect]`` plus its tabular index.

    Supports ``operator.index`` so tabular agents can use it directly as a row key.
    """

    profile: tuple[float, ...]
    history: float
    latent_e: float
    observed: float
    index: int

    def __index__(self) -> int:
        return self.index


def sign(x: float) -> int:
    return int(x > 0) - int(x < 0)


def alignment_score(latent_e: float, valence: int, deadband: float = 0.0) -> int:
    """+1 when affect and action valence agree, -1 when opposed, 0 if either is neutral."""
    e_sign = 0 if abs(latent_e) <= deadband else sign(latent_e)
    return e_sign * sign(valence)
