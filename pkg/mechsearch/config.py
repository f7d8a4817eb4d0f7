import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Literal, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .shared import METHODS, SCENE_FAMILIES

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SceneConfig(_Section):
    workspace_size: float = Field(0.5, gt=0)
    # Fixed object count for training episodes; None samples from [min_objects, max_objects].
    n_objects: Optional[int] = Field(None, ge=1)
    min_objects: int = Field(5, ge=1)
    max_objects: int = Field(20, ge=1)
    side_range: tuple[float, float] = (0.04, 0.09)
    height_range: tuple[float, float] = (0.03, 0.15)
    overlap_tolerance: float = Field(0.2, ge=0, le=1)
    max_rejection_tries: int = Field(200, ge=1)
    family: str = "random"
    camera_position: tuple[float, float, float] = (0.0, -0.45, 0.45)
    camera_look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    focal_px: float = Field(55.0, gt=0)
    image_width: int = Field(64, gt=0)
    image_height: int = Field(64, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.family not in SCENE_FAMILIES:
            raise ValueError(f"unknown scene family {self.family!r}")
        if self.min_objects > self.max_objects:
            raise ValueError("min_objects must not exceed max_objects")
        if self.n_objects is not None and self.n_objects > self.max_objects:
            raise ValueError("n_objects must not exceed max_objects")
        for lo, hi in (self.side_range, self.height_range):
            if not 0 < lo <= hi:
                raise ValueError("size ranges must satisfy 0 < low <= high")
        return self


class DynamicsConfig(_Section):
    max_motions: int = Field(10, ge=1)
    perturb_on_failure: bool = False
    perturb_radius: float = Field(0.05, ge=0)
    perturb_magnitude: float = Field(0.01, ge=0)


class PerceptionConfig(_Section):
    depth_scale: float = Field(1.5, gt=0)
    max_visible_objects: int = Field(20, ge=1)


class OracleConfig(_Section):
    alpha: float = Field(1.0, ge=0)
    beta: float = Field(1.0, ge=0)
    strict_occluders: bool = False
    clearance_radius: float = Field(0.03, gt=0)
    clearance_samples: int = Field(32, ge=4)


class NbvConfig(_Section):
    ring_radius: float = Field(0.6, gt=0)
    elevations_deg: list[float] = [35.0, 65.0]
    azimuth_count: int = Field(8, ge=1)
    voxel_size: float = Field(0.01, gt=0)
    truncation_mult: float = Field(4.0, gt=0)
    weight_cap: float = Field(64.0, gt=0)
    grid_z_range: tuple[float, float] = (-0.04, 0.26)
    render_size: int = Field(24, ge=1)
    target_max_height: float = Field(0.15, gt=0)
    skip_current_view: bool = True


class PolicyConfig(_Section):
    encoder: Literal["mlp", "conv"] = "mlp"
    hidden_sizes: list[int] = [64, 64]
    init_log_std: float = 0.0


class PpoConfig(_Section):
    total_steps: int = Field(10000, ge=0)
    learning_rate: float = Field(3e-4, gt=0)
    gamma: float = Field(0.99, ge=0, le=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    batch_size: int = Field(64, ge=1)
    minibatch_size: int = Field(32, ge=1)
    epochs: int = Field(4, ge=1)
    clip: float = Field(0.2, gt=0)
    normalize_obs: bool = True
    normalize_reward: bool = True
    ent_coef: float = Field(0.0, ge=0)
    vf_coef: float = Field(0.5, ge=0)
    max_grad_norm: float = Field(0.5, gt=0)
    clip_obs: float = Field(10.0, gt=0)
    clip_reward: float = Field(10.0, gt=0)
    adam_eps: float = Field(1e-8, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.batch_size % self.minibatch_size:
            raise ValueError("minibatch_size must divide batch_size")
        return self


class EvalConfig(_Section):
    methods: list[str] = ["xpg", "fixed_threshold"]
    object_counts: list[int] = [5, 10, 15, 20]
    n_scenes: int = Field(100, ge=1)
    base_seed: int = 0
    include_failures: bool = True
    reference_method: str = "fixed_threshold"
    fixed_thresholds: tuple[float, float] = (0.5, 0.5)
    family: str = "random"
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.family not in SCENE_FAMILIES:
            raise ValueError(f"unknown scene family {self.family!r}")
        return self


class RunConfig(_Section):
    seed: int = 0
    output_dir: str = "runs"
    scene: SceneConfig = SceneConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    perception: PerceptionConfig = PerceptionConfig()
    oracle: OracleConfig = OracleConfig()
    nbv: NbvConfig = NbvConfig()
    policy: PolicyConfig = PolicyConfig()
    ppo: PpoConfig = PpoConfig()
    eval: EvalConfig = EvalConfig()


def _parse_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(tree: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override to a raw config dict in place."""
    if "=" not in assignment:
        raise ConfigurationError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot descend into {part!r} while applying {assignment!r}")
    node[parts[-1]] = _parse_value(raw.strip())
    return tree


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    tree: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        logger.info(f"Loading config from {path}")
        if path.suffix == ".json":
            tree = json.loads(path.read_text())
            tree.pop("config_hash", None)
        else:
            tree = tomllib.loads(path.read_text())
    for assignment in overrides or []:
        apply_override(tree, assignment)
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigurationError(str(e)) from e


def config_hash(config: BaseModel) -> str:
    """Short SHA-256 of the canonical dump; where outputs go and how many workers run do not count."""
    exclude = {"output_dir": True, "eval": {"jobs"}} if isinstance(config, RunConfig) else None
    canonical = json.dumps(config.model_dump(mode="json", exclude=exclude), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def dump_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = config.model_dump(mode="json")
    payload["config_hash"] = config_hash(config)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path
