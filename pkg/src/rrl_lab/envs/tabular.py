from __future__ import annotations

import numpy as np

from rrl_lab.cmdp import CmdpSpec, Transition, validate_cmdp


class TabularEnv:
    """Simulator for an arbitrary :class:`CmdpSpec`; observations are state indices."""

    engage_actions = (0,)

    def __init__(self, spec: CmdpSpec, horizon: int):
        self.spec = validate_cmdp(spec)
        self.horizon = horizon
        self.discount = spec.discount
        self.threshold_d = spec.threshold_d
        self.n_states = spec.n_states
        self.n_actions = spec.n_actions
        self.action_affect_map = (0,) * spec.n_actions
        self._cdf = np.cumsum(spec.transition, axis=-1)
        self._start_cdf = np.cumsum(spec.start)
        self._state = 0
        self._t = 0
        self._done = True

    def _draw(self, cdf: np.ndarray, rng: np.random.Generator) -> int:
        return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)

    def reset(self, rng: np.random.Generator) -> int:
        self._state = self._draw(self._start_cdf, rng)
        self._t = 0
        self._done = False
        return self._state

    def step(self, action: int, rng: np.random.Generator) -> tuple[int, Transition, bool]:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        s = self._state
        nxt = self._draw(self._cdf[s, action], rng)
        reward = float(self.spec.reward[s, action])
        cost = float(self.spec.cost[s, action])
        tr = Transition(s, action, reward, cost, nxt, r_eng=reward, violation=cost > 0.0)
        self._state = nxt
        self._t += 1
        self._done = self._t >= self.horizon
        return nxt, tr, self._done
