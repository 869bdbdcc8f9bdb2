"""Experiment configuration documents (YAML) and their fingerprints."""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from rrl_lab.agents import AGENT_KINDS, RULE_BASED, CompositeWeights, LagrangeState, TrainConfig
from rrl_lab.cmdp import CmdpError, CmdpSpec
from rrl_lab.envs import SyntheticEnvConfig, SyntheticUserEnv, TabularEnv, ToyEnv, ToyEnvConfig

SCHEMA_VERSION = 1
ENV_KINDS = ("toy", "synthetic", "tabular")
_TOP_KEYS = {
    "version", "name", "environment", "agent", "seeds", "horizon", "iterations",
    "eval_episodes", "sweep", "output_dir", "gates",
}
_AGENT_KEYS = {"kind", "batch_episodes", "learning_rate", "epsilon_start", "epsilon_end", "weights", "lagrange"}


class ConfigError(ValueError):
    pass


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(config_dict: dict[str, Any]) -> str:
    """SHA-256 over the canonical JSON of the semantic part of a config."""
    semantic = {k: v for k, v in config_dict.items() if k not in ("output_dir", "name", "gates")}
    return hashlib.sha256(canonical_json(semantic).encode()).hexdigest()


def _normalise(obj: Any) -> Any:
    """Plain dicts with str keys and lists instead of tuples."""
    if isinstance(obj, dict):
        return {str(k): _normalise(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalise(v) for v in obj]
    return obj


@dataclass
class ExperimentConfig:
    """One experiment: environment, agent, seeds and an optional sweep grid.

    ``environment.params.threshold_d`` is the single source of the cost
    threshold; the agent's dual variable reads it from there.
    """

    environment: dict[str, Any]
    agent: dict[str, Any]
    seeds: list[int]
    horizon: int
    iterations: int = 200
    eval_episodes: int = 200
    sweep: dict[str, list] | None = None
    output_dir: str = "runs"
    name: str = "experiment"
    gates: list[dict[str, Any]] = field(default_factory=list)
    version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {self.version} (expected {SCHEMA_VERSION})")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(not isinstance(s, int) or s < 0 or s >= 2**64 for s in self.seeds):
            raise ConfigError("seeds must be unsigned 64-bit integers")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise ConfigError("horizon must be a positive integer")
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise ConfigError("iterations must be a positive integer")
        if not isinstance(self.eval_episodes, int) or self.eval_episodes < 1:
            raise ConfigError("eval_episodes must be a positive integer")
        kind = self.environment.get("kind")
        if kind not in ENV_KINDS:
            raise ConfigError(f"environment.kind must be one of {ENV_KINDS}, got {kind!r}")
        extra = set(self.agent) - _AGENT_KEYS
        if extra:
            raise ConfigError(f"unknown agent keys {sorted(extra)}")
        if self.agent.get("kind") not in AGENT_KINDS:
            raise ConfigError(f"agent.kind must be one of {AGENT_KINDS}, got {self.agent.get('kind')!r}")
        if self.agent["kind"] == RULE_BASED and kind == "tabular":
            raise ConfigError("the rule-based agent needs an affect-aware environment (toy or synthetic)")
        if self.sweep is not None:
            extra = set(self.sweep) - {"weights", "threshold_d"}
            if extra:
                raise ConfigError(f"unknown sweep keys {sorted(extra)}")
            if not self.sweep:
                raise ConfigError("sweep must define weights and/or threshold_d")
            for key, grid in self.sweep.items():
                if not isinstance(grid, list) or not grid:
                    raise ConfigError(f"sweep.{key} must be a nonempty list")
            for w in self.sweep.get("weights", []):
                if len(w) != 3:
                    raise ConfigError(f"sweep weights must be (w_eng, w_emo, w_safety) triples, got {w}")
        for gate in self.gates:
            if set(gate) - {"agent", "metric", "max", "min"} or "metric" not in gate:
                raise ConfigError(f"malformed gate {gate}")
        # build everything once so bad parameters surface before any run starts
        try:
            for cell in self.cells():
                cell.build_env()
                cell.train_config()
        except ConfigError:
            raise
        except (CmdpError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- (de)serialisation ------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d = {
            "version": self.version,
            "name": self.name,
            "environment": _normalise(self.environment),
            "agent": _normalise(self.agent),
            "seeds": list(self.seeds),
            "horizon": self.horizon,
            "iterations": self.iterations,
            "eval_episodes": self.eval_episodes,
            "output_dir": self.output_dir,
        }
        if self.sweep is not None:
            d["sweep"] = _normalise(self.sweep)
        if self.gates:
            d["gates"] = _normalise(self.gates)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a mapping")
        extra = set(data) - _TOP_KEYS
        if extra:
            raise ConfigError(f"unknown top-level keys {sorted(extra)}")
        missing = {"environment", "agent", "seeds", "horizon"} - set(data)
        if missing:
            raise ConfigError(f"missing keys {sorted(missing)}")
        return cls(**copy.deepcopy(data))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_yaml(text)

    # -- resolution -------------------------------------------------------
    def cells(self) -> list["CellConfig"]:
        """Sweep cells in canonical order (weights outer, threshold inner)."""
        sweep = self.sweep or {}
        weights = sweep.get("weights", [None])
        ds = sweep.get("threshold_d", [None])
        cells = []
        for i, (w, d) in enumerate(itertools.product(weights, ds)):
            env = copy.deepcopy(_normalise(self.environment))
            agent = copy.deepcopy(_normalise(self.agent))
            if w is not None:
                agent["weights"] = {"w_eng": w[0], "w_emo": w[1], "w_safety": w[2]}
            if d is not None:
                env.setdefault("params", {})["threshold_d"] = d
            cells.append(CellConfig(i, env, agent, self.horizon, self.iterations, self.eval_episodes))
        return cells


@dataclass
class CellConfig:
    """A fully resolved sweep cell; this is what a RunRecord stores and fingerprints."""

    index: int
    environment: dict[str, Any]
    agent: dict[str, Any]
    horizon: int
    iterations: int
    eval_episodes: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "environment": self.environment,
            "agent": self.agent,
            "horizon": self.horizon,
            "iterations": self.iterations,
            "eval_episodes": self.eval_episodes,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], index: int = 0) -> "CellConfig":
        return cls(index, data["environment"], data["agent"], data["horizon"], data["iterations"], data["eval_episodes"])

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())

    @property
    def label(self) -> str:
        w = self.agent.get("weights", {})
        d = self.environment.get("params", {}).get("threshold_d")
        parts = [self.agent["kind"]]
        if w:
            parts.append("w=" + "/".join(f"{w.get(k, 0):g}" for k in ("w_eng", "w_emo", "w_safety")))
        if d is not None:
            parts.append(f"d={d:g}")
        return " ".join(parts)

    def build_env(self):
        kind = self.environment["kind"]
        params = self.environment.get("params", {}) or {}
        if kind == "toy":
            return ToyEnv(ToyEnvConfig.from_dict(params), horizon=self.horizon)
        if kind == "synthetic":
            return SyntheticUserEnv(SyntheticEnvConfig.from_dict(params), horizon=self.horizon)
        if kind == "tabular":
            return TabularEnv(CmdpSpec.from_dict(params), horizon=self.horizon)
        raise ConfigError(f"unknown environment kind {kind!r}")

    def threshold_d(self) -> float:
        return float(self.build_env().threshold_d)

    def train_config(self) -> TrainConfig:
        a = self.agent
        lagrange = dict(a.get("lagrange", {}) or {})
        if "threshold_d" in lagrange:
            raise ConfigError("set threshold_d under environment.params, not agent.lagrange")
        weights = a.get("weights") or {"w_eng": 1.0, "w_emo": 0.0, "w_safety": 0.0}
        return TrainConfig(
            iterations=self.iterations,
            batch_episodes=a.get("batch_episodes", 8),
            learning_rate=a.get("learning_rate", 0.1),
            epsilon_start=a.get("epsilon_start", 0.3),
            epsilon_end=a.get("epsilon_end", 0.01),
            weights=CompositeWeights(**weights),
            lagrange=LagrangeState(
                lam=lagrange.get("lam", 0.0),
                dual_step_size=lagrange.get("dual_step_size", 0.05),
                threshold_d=self.threshold_d(),
            ),
        )
