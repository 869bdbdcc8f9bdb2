"""Experiment execution: seed fan-out, sweeps, baseline comparison and outputs.

Output layout under ``output_dir``::

    records.jsonl                one RunRecord per line, canonical order
    learning_curves/<fp12>_cell<i>_seed<s>.csv
    frontier.csv                 sweep cells (or oracle front), FRONTIER_COLUMNS
    frontier_points.csv          one FRONTIER_COLUMNS row per record
    comparison.csv               one row per agent
    oracle_frontier.csv, oracle_policies.csv, oracle.json   exact tables (oracle verb)
"""

from __future__ import annotations

import copy
import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from rrl_lab.agents import (
    AGENT_KINDS,
    RRL,
    RULE_BASED,
    RuleBasedAgent,
    TrainReport,
    evaluate,
    train_baseline,
    train_rrl,
)
from rrl_lab.harness.config import CellConfig, ConfigError, ExperimentConfig, canonical_json, fingerprint
from rrl_lab.metrics import METRIC_FIELDS, MetricReport, aggregate, evaluate_trajectories, pareto_index
from rrl_lab.oracle import constrained_optimum, enumerate_policies, exact_pareto_front

FORMAT_VERSION = 1
CURVE_COLUMNS = ("iteration", "mean_return", "mean_cost", "lambda")
FRONTIER_COLUMNS = (
    "label",
    "source",
    "threshold_d",
    "w_eng",
    "w_emo",
    "w_safety",
    "engagement_return",
    "engagement_return_hw",
    "engagement_rate",
    "alignment",
    "alignment_hw",
    "safety_cost",
    "safety_cost_hw",
    "pareto_index",
)
COMPARISON_COLUMNS = ("agent",) + tuple(
    col for m in METRIC_FIELDS for col in (m, f"{m}_hw")
) + ("n_seeds",)


class RunError(RuntimeError):
    pass


@dataclass
class RunRecord:
    fingerprint: str
    config: dict[str, Any]
    seed: int
    cell: int
    label: str
    metrics: MetricReport
    train: dict[str, Any] | None
    wall_clock_seconds: float = 0.0
    format_version: int = FORMAT_VERSION

    def to_dict(self, include_wall_clock: bool = True) -> dict[str, Any]:
        d = {
            "format_version": self.format_version,
            "fingerprint": self.fingerprint,
            "config": self.config,
            "seed": self.seed,
            "cell": self.cell,
            "label": self.label,
            "metrics": self.metrics.to_dict(),
            "train": self.train,
        }
        if include_wall_clock:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d

    def to_json(self, include_wall_clock: bool = True) -> str:
        return canonical_json(self.to_dict(include_wall_clock))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        rec = cls(
            fingerprint=data["fingerprint"],
            config=data["config"],
            seed=data["seed"],
            cell=data["cell"],
            label=data["label"],
            metrics=MetricReport.from_dict(data["metrics"]),
            train=data["train"],
            wall_clock_seconds=data.get("wall_clock_seconds", 0.0),
            format_version=data["format_version"],
        )
        rec.verify()
        return rec

    def verify(self) -> None:
        if fingerprint(self.config) != self.fingerprint:
            raise RunError(f"fingerprint mismatch for record cell={self.cell} seed={self.seed}")


def run_unit(cell_dict: dict[str, Any], cell_index: int, seed: int) -> RunRecord:
    """Train and evaluate one (cell, seed) unit. Pure function of its arguments."""
    start = time.perf_counter()
    cell = CellConfig.from_dict(cell_dict, cell_index)
    env = cell.build_env()
    kind = cell.agent["kind"]
    report: TrainReport | None = None
    if kind == RULE_BASED:
        agent = RuleBasedAgent(env)
    else:
        tc = cell.train_config()
        report = train_rrl(env, tc, seed) if kind == RRL else train_baseline(env, kind, tc, seed)
        agent = report.agent()
    trajs = evaluate(env, agent, seed, cell.eval_episodes)
    metrics = evaluate_trajectories(
        trajs,
        discount=env.discount,
        threshold_d=env.threshold_d,
        engage_actions=env.engage_actions,
        action_affect_map=env.action_affect_map,
    )
    return RunRecord(
        fingerprint=cell.fingerprint,
        config=cell.to_dict(),
        seed=seed,
        cell=cell_index,
        label=cell.label,
        metrics=metrics,
        train=report.to_dict() if report is not None else None,
        wall_clock_seconds=time.perf_counter() - start,
    )


def _units(config: ExperimentConfig, seeds: Sequence[int] | None = None) -> list[tuple[dict, int, int]]:
    seeds = list(seeds) if seeds is not None else list(config.seeds)
    return [(cell.to_dict(), cell.index, seed) for cell in config.cells() for seed in seeds]


def _execute(units: list[tuple[dict, int, int]], workers: int) -> list[RunRecord]:
    """Run units serially or on a process pool; results keep the order of ``units``."""
    if workers <= 1 or len(units) <= 1:
        return [run_unit(*u) for u in units]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_unit, *u) for u in units]
        return [f.result() for f in futures]


def _prepare_output(output_dir: str | Path | None) -> Path | None:
    if output_dir is None:
        return None
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RunError(f"output directory {out} is not writable: {exc}") from exc
    return out


def write_records(records: Iterable[RunRecord], path: str | Path, include_wall_clock: bool = True) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json(include_wall_clock) + "\n")


def load_records(path: str | Path) -> list[RunRecord]:
    with open(path) as fh:
        return [RunRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def run_experiment(
    config: ExperimentConfig,
    *,
    workers: int = 1,
    output_dir: str | Path | None = None,
    seeds: Sequence[int] | None = None,
) -> list[RunRecord]:
    """Run every (sweep cell x seed) unit and optionally write the records.

    Records come back in canonical (cell, seed) order, so the written output
    does not depend on ``workers``.
    """
    out = _prepare_output(output_dir)
    records = _execute(_units(config, seeds), workers)
    if out is not None:
        write_records(records, out / "records.jsonl")
        emit_plot_data(records, out)
    return records


def _fmt(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return "" if value is None else value


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c)) for c in columns})


def curve_path(out: Path, record: RunRecord) -> Path:
    return out / "learning_curves" / f"{record.fingerprint[:12]}_cell{record.cell}_seed{record.seed}.csv"


def emit_plot_data(records: Sequence[RunRecord], output_dir: str | Path) -> list[Path]:
    """Learning-curve CSVs (one per trained record) and per-record frontier points."""
    if not records:
        raise ValueError("need at least one record")
    out = Path(output_dir)
    written = []
    for rec in records:
        if rec.train is None:
            continue
        path = curve_path(out, rec)
        path.parent.mkdir(parents=True, exist_ok=True)
        series = rec.train
        rows = [
            {"iteration": it, "mean_return": r, "mean_cost": c, "lambda": lam}
            for it, r, c, lam in zip(series["iteration"], series["mean_return"], series["mean_cost"], series["lambda"])
        ]
        _write_csv(path, CURVE_COLUMNS, rows)
        written.append(path)
    rows = [_frontier_row(rec.label, rec.config, rec.metrics, "run") for rec in records]
    path = out / "frontier_points.csv"
    _write_csv(path, FRONTIER_COLUMNS, rows)
    written.append(path)
    return written


def _frontier_row(label: str, cell: dict[str, Any], m: MetricReport, source: str) -> dict[str, Any]:
    hw = m.halfwidths or {}
    w = cell["agent"].get("weights") or {}
    return {
        "label": label,
        "source": source,
        "threshold_d": (cell["environment"].get("params") or {}).get("threshold_d"),
        "w_eng": w.get("w_eng"),
        "w_emo": w.get("w_emo"),
        "w_safety": w.get("w_safety"),
        "engagement_return": m.mean_return,
        "engagement_return_hw": hw.get("mean_return"),
        "engagement_rate": m.engagement_rate,
        "alignment": m.emotional_alignment,
        "alignment_hw": hw.get("emotional_alignment"),
        "safety_cost": m.safety_cost,
        "safety_cost_hw": hw.get("safety_cost"),
    }


@dataclass
class FrontierTable:
    rows: list[dict[str, Any]]
    records: list[RunRecord] = field(default_factory=list)

    def series(self) -> dict[str, list[float]]:
        """Plot-ready coordinate series keyed by column."""
        return {c: [r[c] for r in self.rows] for c in FRONTIER_COLUMNS if c not in ("label", "source")}


def frontier_sweep(
    config: ExperimentConfig, *, workers: int = 1, output_dir: str | Path | None = None
) -> FrontierTable:
    """One frontier row per sweep cell, metrics aggregated across seeds.

    The Pareto index is computed over the swept set on (engagement return,
    alignment, -safety cost).
    """
    if config.sweep is None:
        raise ConfigError("frontier_sweep needs a sweep grid")
    out = _prepare_output(output_dir)
    records = run_experiment(config, workers=workers, output_dir=out)
    by_cell: dict[int, list[RunRecord]] = {}
    for rec in records:
        by_cell.setdefault(rec.cell, []).append(rec)
    rows = []
    for cell_index in sorted(by_cell):
        recs = by_cell[cell_index]
        agg = aggregate([r.metrics for r in recs])
        rows.append(_frontier_row(recs[0].label, recs[0].config, agg, "sweep"))
    pts = [(r["engagement_return"], r["alignment"], -r["safety_cost"]) for r in rows]
    for r, idx in zip(rows, pareto_index(pts)):
        r["pareto_index"] = float(idx)
    if out is not None:
        _write_csv(out / "frontier.csv", FRONTIER_COLUMNS, rows)
    return FrontierTable(rows, records)


def oracle_frontier(config: ExperimentConfig, output_dir: str | Path | None = None) -> dict[str, Any]:
    """Exact policy table, reward-cost front and constrained optimum for a tabular env."""
    cell = config.cells()[0]
    env = cell.build_env()
    spec = getattr(env, "spec", None)
    if spec is None:
        raise ConfigError(f"environment kind {config.environment['kind']!r} has no exact tabular form")
    points = enumerate_policies(spec)
    front = exact_pareto_front(spec, points)
    solution = None
    try:
        solution = constrained_optimum(spec, points)
    except ValueError:
        pass
    rows = []
    for p in front:
        rows.append(
            {
                "label": "policy " + "".join(map(str, p.actions)),
                "source": "oracle",
                "threshold_d": spec.threshold_d,
                "engagement_return": p.value_reward,
                "safety_cost": p.value_cost,
            }
        )
    if rows:
        idx = pareto_index([(r["engagement_return"], -r["safety_cost"]) for r in rows])
        for r, v in zip(rows, idx):
            r["pareto_index"] = float(v)
    result = {
        "policies": [
            {"actions": list(p.actions), "value_reward": p.value_reward, "value_cost": p.value_cost} for p in points
        ],
        "front": rows,
        "constrained_optimum": None
        if solution is None
        else {
            "optimal_value": float(solution.optimal_value),
            "optimal_cost": float(solution.optimal_cost),
            "lambda_star": float(solution.lambda_star),
            "policy": list(solution.policy.actions),
            "alternative": list(solution.alternative.actions) if solution.alternative else None,
            "mixture_weight": float(solution.mixture_weight),
        },
    }
    out = _prepare_output(output_dir)
    if out is not None:
        _write_csv(out / "oracle_frontier.csv", FRONTIER_COLUMNS, rows)
        _write_csv(
            out / "oracle_policies.csv",
            ("actions", "value_reward", "value_cost"),
            [{"actions": "".join(map(str, p["actions"])), **p} for p in result["policies"]],
        )
        (out / "oracle.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result


@dataclass
class ComparisonTable:
    rows: list[dict[str, Any]]
    records: dict[str, list[RunRecord]]


def compare_baselines(
    config: ExperimentConfig,
    *,
    workers: int = 1,
    output_dir: str | Path | None = None,
    agents: Sequence[str] = AGENT_KINDS,
) -> ComparisonTable:
    """Rule-based, engagement-only, penalty-shaped and RRL on identical seeds.

    Evaluation episode ``k`` of seed ``s`` uses the same environment stream for
    every agent, so the comparison is paired.
    """
    out = _prepare_output(output_dir)
    base = config.to_dict()
    base.pop("sweep", None)
    base.pop("gates", None)
    units, index = [], []
    for kind in agents:
        if kind == RULE_BASED and config.environment["kind"] == "tabular":
            continue
        d = copy.deepcopy(base)
        d["agent"]["kind"] = kind
        cfg = ExperimentConfig.from_dict(d)
        for u in _units(cfg):
            units.append(u)
            index.append(kind)
    records = _execute(units, workers)
    by_agent: dict[str, list[RunRecord]] = {}
    for rec, kind in zip(records, index):
        by_agent.setdefault(kind, []).append(rec)
    rows = []
    for kind, recs in by_agent.items():
        agg = aggregate([r.metrics for r in recs])
        hw = agg.halfwidths or {}
        row = {"agent": kind, "n_seeds": len(recs)}
        for m in METRIC_FIELDS:
            row[m] = getattr(agg, m)
            row[f"{m}_hw"] = hw.get(m)
        rows.append(row)
    if out is not None:
        _write_csv(out / "comparison.csv", COMPARISON_COLUMNS, rows)
        write_records(records, out / "records.jsonl")
        emit_plot_data(records, out)
    return ComparisonTable(rows, by_agent)


def check_gates(gates: Sequence[dict[str, Any]], rows: Sequence[dict[str, Any]]) -> list[str]:
    """Failed gate descriptions for metric rows (comparison rows or frontier rows)."""
    failures = []
    for gate in gates:
        metric = gate["metric"]
        for row in rows:
            if "agent" in gate and row.get("agent") != gate["agent"]:
                continue
            value = row.get(metric)
            if value is None:
                failures.append(f"{metric} missing for {row.get('agent', row.get('label'))}")
                continue
            if "max" in gate and value > gate["max"]:
                failures.append(f"{row.get('agent', row.get('label'))}: {metric}={value:.6g} > {gate['max']}")
            if "min" in gate and value < gate["min"]:
                failures.append(f"{row.get('agent', row.get('label'))}: {metric}={value:.6g} < {gate['min']}")
    return failures
