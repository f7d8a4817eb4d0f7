import json

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .shared import SCHEMA_VERSION, TABLE_HEIGHT


class CameraPose(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    focal_px: float = Field(gt=0)
    width: int = Field(gt=0)
    height: int = Field(gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.position[2] <= TABLE_HEIGHT:
            raise ValueError("camera must be above the table")
        if self.position == self.look_at:
            raise ValueError("camera position and look_at coincide")
        return self

    def same_view(self, other: "CameraPose", tol: float = 1e-6) -> bool:
        return all(abs(a - b) <= tol for a, b in zip(self.position + self.look_at, other.position + other.look_at))


class ObjectInstance(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int = Field(ge=1)
    # (xmin, ymin, xmax, ymax) on the table plane, meters
    footprint: tuple[float, float, float, float]
    height: float = Field(gt=0)
    is_target: bool = False
    removed: bool = False

    @model_validator(mode="after")
    def _check(self):
        xmin, ymin, xmax, ymax = self.footprint
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"object {self.id}: degenerate footprint {self.footprint}")
        return self

    @property
    def center(self) -> tuple[float, float]:
        xmin, ymin, xmax, ymax = self.footprint
        return (xmin + xmax) / 2.0, (ymin + ymax) / 2.0

    @property
    def area(self) -> float:
        xmin, ymin, xmax, ymax = self.footprint
        return (xmax - xmin) * (ymax - ymin)


class SceneState(BaseModel):
    """Ground-truth tabletop world: the latent state the agent only observes partially."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: int = SCHEMA_VERSION
    objects: tuple[ObjectInstance, ...]
    workspace: float = Field(0.5, gt=0)
    camera: CameraPose
    step_count: int = Field(0, ge=0)
    rng_seed: int = Field(ge=0)
    family: str = "random"

    @model_validator(mode="after")
    def _check(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        if sum(o.is_target for o in self.objects) != 1:
            raise ValueError("exactly one object must be the target")
        half = self.workspace / 2.0
        x, y, _ = self.camera.look_at
        if abs(x) > half or abs(y) > half:
            raise ValueError("camera look_at must lie inside the workspace")
        return self

    @property
    def target(self) -> ObjectInstance:
        return next(o for o in self.objects if o.is_target)

    @property
    def target_id(self) -> int:
        return self.target.id

    def get(self, object_id: int) -> ObjectInstance | None:
        return next((o for o in self.objects if o.id == object_id), None)

    def active_objects(self) -> list[ObjectInstance]:
        return [o for o in self.objects if not o.removed]

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SceneState":
        data = json.loads(text)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported scene schema version {version}")
        return cls.model_validate(data)
