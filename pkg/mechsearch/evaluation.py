"""Evaluation batches, task-efficiency metrics, ablation grids, episode records and replay."""
import copy
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from .agent import EpisodeResult, FixedThresholdPolicy, FlatPolicy, Policy, ScriptedPolicy, ThresholdPolicy, run_episode
from .config import RunConfig, config_hash
from .decision import Thresholds
from .dynamics import OutcomeKind
from .env import MechanicalSearchEnv, head_for
from .errors import ConfigurationError, IntegrityError
from .perception import Observation
from .policy import load_checkpoint
from .shared import GRASP_TARGET, LEARNED_METHODS, SCHEMA_VERSION

logger = logging.getLogger(__name__)


class EpisodeRecord(BaseModel):
    """One evaluated episode. Per-step lists cover every decision, including an aborting one."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    scene_seed: int
    method: str
    n_objects: int
    family: str
    config_hash: str
    actions: list[str]
    action_details: list[dict]
    outcomes: list[str]
    policy_outputs: list[dict]
    q_target: list[float]
    q_occlude: list[float]
    tau1: list[Optional[float]]
    tau2: list[Optional[float]]
    motion_count: int
    success: bool
    aborted: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.motion_count != len(self.actions):
            raise ValueError(f"motion_count {self.motion_count} != {len(self.actions)} recorded actions")
        if self.success and (not self.actions or self.actions[-1] != GRASP_TARGET):
            raise ValueError("a successful episode must end with grasp_target")
        return self


def record_from_result(result: EpisodeResult, method: str, n_objects: int, family: str, cfg_hash: str) -> EpisodeRecord:
    executed = [s for s in result.steps if s["outcome"] != OutcomeKind.ABORTED.value]
    return EpisodeRecord(
        scene_seed=result.seed,
        method=method,
        n_objects=n_objects,
        family=family,
        config_hash=cfg_hash,
        actions=[s["action"] for s in executed],
        action_details=[s["action_detail"] for s in executed],
        outcomes=[s["outcome"] for s in result.steps],
        policy_outputs=[s["policy_output"] for s in result.steps],
        q_target=[s["q_target"] for s in result.steps],
        q_occlude=[s["q_occlude"] for s in result.steps],
        tau1=[s["tau1"] for s in result.steps],
        tau2=[s["tau2"] for s in result.steps],
        motion_count=result.motion_count,
        success=result.success,
        aborted=result.aborted,
    )


def load_policy(method: str, checkpoint: str | Path | None, config: RunConfig) -> Policy:
    if method == "fixed_threshold":
        return FixedThresholdPolicy(*config.eval.fixed_thresholds)
    if checkpoint is None:
        raise ConfigurationError(f"method {method!r} needs a trained checkpoint")
    params, normalizer, meta = load_checkpoint(checkpoint)
    expected = head_for(method)
    if meta["head"] != expected:
        raise ConfigurationError(f"checkpoint {checkpoint} has a {meta['head']} head, {method} needs {expected}")
    if meta["method"] != method:
        logger.warning(f"⚠️  Evaluating {method} with a checkpoint trained as {meta['method']}")
    if expected == "flat":
        return FlatPolicy(params, normalizer)
    return ThresholdPolicy(params, normalizer)


def run_batch(
    method: str,
    n_objects: int,
    n_scenes: int,
    base_seed: int,
    config: RunConfig,
    policy: Policy | None = None,
    family: str | None = None,
    jobs: int = 1,
) -> list[EpisodeRecord]:
    """Scene i uses seed ``base_seed + i``; records come back in scene order for any ``jobs``."""
    if n_scenes < 1:
        raise ValueError("n_scenes must be at least 1")
    head_for(method)
    policy = policy if policy is not None else load_policy(method, None, config)
    family = family or config.eval.family
    cfg_hash = config_hash(config)

    def one(i: int) -> EpisodeRecord:
        env = MechanicalSearchEnv(config, method, n_objects=n_objects, family=family)
        result = run_episode(env, copy.deepcopy(policy), base_seed + i)
        return record_from_result(result, method, n_objects, family, cfg_hash)

    logger.info(f"▶️  {method}: {n_scenes} scenes x {n_objects} objects ({family}), seeds {base_seed}..{base_seed + n_scenes - 1}")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(one, range(n_scenes)))
    else:
        records = [one(i) for i in range(n_scenes)]
    successes = sum(r.success for r in records)
    logger.info(f"✓ {method} @ {n_objects}: {successes}/{n_scenes} successes, mean motions {np.mean([r.motion_count for r in records]):.2f}")
    return records


def task_efficiency(success_rate: float, avg_motions: float) -> float:
    """Success rate (percent) per average motion."""
    if success_rate == 0:
        return 0.0
    if not avg_motions or np.isnan(avg_motions):
        return float("nan")
    return success_rate / avg_motions


def relative_efficiency(efficiency: float, reference_efficiency: float) -> float:
    if not reference_efficiency or np.isnan(reference_efficiency):
        return float("nan")
    return efficiency / reference_efficiency


METRIC_COLUMNS = ["method", "n_objects", "episodes", "successes", "success_rate", "avg_motions", "efficiency", "relative_efficiency"]


@dataclass
class MetricsTable:
    frame: pd.DataFrame
    reference_method: str
    include_failures: bool

    def cell(self, method: str, n_objects: int) -> pd.Series | None:
        rows = self.frame[(self.frame["method"] == method) & (self.frame["n_objects"] == n_objects)]
        if rows.empty or rows.iloc[0]["episodes"] == 0 or pd.isna(rows.iloc[0]["episodes"]):
            return None
        return rows.iloc[0]

    def to_csv(self, path, **provenance) -> None:
        self.frame.assign(**provenance).to_csv(path, index=False, float_format="%.4f")

    def to_wide_frame(self) -> pd.DataFrame:
        """One row per method, success/motions/relative-efficiency columns per object count."""
        wide = self.frame.pivot(index="method", columns="n_objects", values=["success_rate", "avg_motions", "relative_efficiency"])
        wide.columns = [f"{name}_{n}" for name, n in wide.columns]
        order = [m for m in dict.fromkeys(self.frame["method"])]
        return wide.reindex(order).reset_index()

    def to_wide_csv(self, path, **provenance) -> None:
        self.to_wide_frame().assign(**provenance).to_csv(path, index=False, float_format="%.4f")


def compute_metrics(
    records: list[EpisodeRecord],
    reference_method: str,
    include_failures: bool = True,
    methods: list[str] | None = None,
    object_counts: list[int] | None = None,
) -> MetricsTable:
    """Success rate, average motions, efficiency and efficiency relative to ``reference_method``.

    Cells of the (methods x object_counts) grid with no records are kept as
    NaN rows instead of zeros.
    """
    frame = pd.DataFrame(
        [{"method": r.method, "n_objects": r.n_objects, "success": r.success, "motions": r.motion_count} for r in records],
        columns=["method", "n_objects", "success", "motions"],
    )
    methods = methods or list(dict.fromkeys(frame["method"]))
    object_counts = object_counts or sorted(frame["n_objects"].unique().tolist())

    rows = []
    for method in methods:
        for n in object_counts:
            cell = frame[(frame["method"] == method) & (frame["n_objects"] == n)]
            if cell.empty:
                rows.append({"method": method, "n_objects": n, "episodes": 0, "successes": 0} | dict.fromkeys(METRIC_COLUMNS[4:], float("nan")))
                continue
            successes = int(cell["success"].sum())
            success_rate = 100.0 * successes / len(cell)
            counted = cell if include_failures else cell[cell["success"]]
            avg_motions = float(counted["motions"].mean()) if len(counted) else float("nan")
            rows.append(
                {
                    "method": method,
                    "n_objects": n,
                    "episodes": len(cell),
                    "successes": successes,
                    "success_rate": success_rate,
                    "avg_motions": avg_motions,
                    "efficiency": task_efficiency(success_rate, avg_motions),
                    "relative_efficiency": float("nan"),
                }
            )
    table = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    for idx, row in table.iterrows():
        ref = table[(table["method"] == reference_method) & (table["n_objects"] == row["n_objects"])]
        if not ref.empty and row["episodes"] > 0:
            table.at[idx, "relative_efficiency"] = relative_efficiency(row["efficiency"], ref.iloc[0]["efficiency"])
    return MetricsTable(frame=table, reference_method=reference_method, include_failures=include_failures)


def run_ablation_suite(
    config: RunConfig,
    checkpoints: dict[str, str | Path],
    methods: list[str] | None = None,
    object_counts: list[int] | None = None,
    n_scenes: int | None = None,
    base_seed: int | None = None,
    family: str | None = None,
    jobs: int | None = None,
) -> tuple[MetricsTable, list[EpisodeRecord]]:
    """Full methods x object-count grid; every learned method needs a checkpoint."""
    methods = methods or config.eval.methods
    object_counts = object_counts or config.eval.object_counts
    n_scenes = n_scenes or config.eval.n_scenes
    base_seed = config.eval.base_seed if base_seed is None else base_seed
    jobs = jobs or config.eval.jobs

    missing = [m for m in methods if m in LEARNED_METHODS and m not in checkpoints]
    if missing:
        raise ConfigurationError(f"no checkpoint given for {missing}")
    policies = {m: load_policy(m, checkpoints.get(m), config) for m in methods}

    logger.info("=" * 80)
    logger.info(f"EVALUATION: methods={methods} objects={object_counts} scenes={n_scenes} family={family or config.eval.family}")
    logger.info("=" * 80)
    records: list[EpisodeRecord] = []
    for method in methods:
        for n in object_counts:
            records += run_batch(method, n, n_scenes, base_seed, config, policies[method], family, jobs)
    table = compute_metrics(records, config.eval.reference_method, config.eval.include_failures, methods, object_counts)
    return table, records


def write_records(records: list[EpisodeRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for record in records:
            f.write(record.model_dump_json() + "\n")
    return path


def read_records(path) -> list[EpisodeRecord]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"episode file not found: {path}")
    return [EpisodeRecord.model_validate_json(line) for line in path.read_text().splitlines() if line.strip()]


def write_summary(path, table: MetricsTable, config: RunConfig, extra: dict | None = None) -> Path:
    path = Path(path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "base_seed": config.eval.base_seed,
        "reference_method": table.reference_method,
        "include_failures": table.include_failures,
        "cells": json.loads(table.frame.to_json(orient="records")),
    }
    payload.update(extra or {})
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def recorded_choices(record: EpisodeRecord) -> list[Thresholds | int]:
    if head_for(record.method) == "flat":
        return [int(out["action_index"]) for out in record.policy_outputs]
    return [Thresholds(t1, t2) for t1, t2 in zip(record.tau1, record.tau2)]


class ImageDumpPolicy(ScriptedPolicy):
    """Replays recorded choices and saves the mask/ODM it is shown at every step."""

    def __init__(self, choices: list, out_dir: Path | None):
        super().__init__(choices)
        self.out_dir = out_dir
        self.written: list[Path] = []

    def choose(self, observation: Observation):
        if self.out_dir is not None:
            step = self._i
            for name, image in (("mask", observation.target_mask.to_image()), ("odm", observation.odm.to_image())):
                target = self.out_dir / f"{name}_{step:02d}.png"
                image.save(target)
                self.written.append(target)
        return super().choose(observation)


@dataclass(frozen=True)
class ReplayReport:
    record: EpisodeRecord
    replayed: EpisodeRecord
    images: list[Path]


def replay_episode(record: EpisodeRecord, config: RunConfig, out_dir: str | Path | None = None) -> ReplayReport:
    """Re-simulate ``record`` from its seed with its recorded policy outputs and compare traces."""
    current = config_hash(config)
    if current != record.config_hash:
        raise IntegrityError(f"config hash {current} does not match the recorded {record.config_hash}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    policy = ImageDumpPolicy(recorded_choices(record), out)
    env = MechanicalSearchEnv(config, record.method, n_objects=record.n_objects, family=record.family)
    result = run_episode(env, policy, record.scene_seed)
    replayed = record_from_result(result, record.method, record.n_objects, record.family, current)

    for field in ("actions", "action_details", "outcomes", "motion_count", "success", "aborted"):
        if getattr(replayed, field) != getattr(record, field):
            raise IntegrityError(
                f"replay of seed {record.scene_seed} diverged on {field}: "
                f"recorded {getattr(record, field)!r}, replayed {getattr(replayed, field)!r}"
            )
    logger.info(f"✓ Replay of seed {record.scene_seed} ({record.method}) matches: {record.motion_count} motions, success={record.success}")
    return ReplayReport(record=record, replayed=replayed, images=policy.written)
