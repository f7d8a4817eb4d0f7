"""Action primitives and their abstract 2.5-D execution."""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Union

import numpy as np

from .config import DynamicsConfig
from .errors import BudgetExhaustedError
from .grasp_oracle import GraspScores
from .scene import CameraPose, ObjectInstance, SceneState
from .shared import GRASP_TARGET, MOVE_VIEW, REMOVE_OCCLUDER

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraspTarget:
    tag: ClassVar[str] = GRASP_TARGET


@dataclass(frozen=True)
class RemoveOccluder:
    # None when the flat policy picked removal with no eligible occluder.
    object_id: int | None
    tag: ClassVar[str] = REMOVE_OCCLUDER


@dataclass(frozen=True)
class MoveView:
    pose: CameraPose
    tag: ClassVar[str] = MOVE_VIEW


ActionPrimitive = Union[GraspTarget, RemoveOccluder, MoveView]


def action_to_dict(action: ActionPrimitive) -> dict:
    if isinstance(action, RemoveOccluder):
        return {"tag": action.tag, "object_id": action.object_id}
    if isinstance(action, MoveView):
        return {"tag": action.tag, "pose": action.pose.model_dump(mode="json")}
    return {"tag": action.tag}


def action_from_dict(data: dict) -> ActionPrimitive:
    tag = data["tag"]
    if tag == GRASP_TARGET:
        return GraspTarget()
    if tag == REMOVE_OCCLUDER:
        return RemoveOccluder(object_id=data.get("object_id"))
    if tag == MOVE_VIEW:
        return MoveView(pose=CameraPose.model_validate(data["pose"]))
    raise ValueError(f"unknown action tag {tag!r}")


class OutcomeKind(str, Enum):
    TARGET_EXTRACTED = "target_extracted"
    OCCLUDER_REMOVED = "occluder_removed"
    GRASP_FAILED = "grasp_failed"
    VIEW_MOVED = "view_moved"
    INFEASIBLE = "infeasible"
    # no-NBV variant: both gates failed, the trial ends without a motion
    ABORTED = "aborted"


@dataclass(frozen=True)
class TransitionOutcome:
    kind: OutcomeKind
    action_tag: str | None = None
    object_id: int | None = None
    success_probability: float | None = None
    detail: str = ""

    @property
    def success(self) -> bool:
        return self.kind is OutcomeKind.TARGET_EXTRACTED


def aborted_outcome() -> TransitionOutcome:
    return TransitionOutcome(kind=OutcomeKind.ABORTED, action_tag=MOVE_VIEW, detail="NBV disabled")


def _replace_object(scene: SceneState, updated: ObjectInstance) -> tuple[ObjectInstance, ...]:
    return tuple(updated if o.id == updated.id else o for o in scene.objects)


def _perturb(scene: SceneState, around: ObjectInstance, rng: np.random.Generator, config: DynamicsConfig):
    half = scene.workspace / 2.0
    cx, cy = around.center
    objects = []
    for o in scene.objects:
        ox, oy = o.center
        if o.removed or o.id == around.id or np.hypot(ox - cx, oy - cy) > config.perturb_radius:
            objects.append(o)
            continue
        dx, dy = rng.uniform(-config.perturb_magnitude, config.perturb_magnitude, size=2)
        xmin, ymin, xmax, ymax = o.footprint
        dx = float(np.clip(dx, -half - xmin, half - xmax))
        dy = float(np.clip(dy, -half - ymin, half - ymax))
        objects.append(o.model_copy(update={"footprint": (xmin + dx, ymin + dy, xmax + dx, ymax + dy)}))
    return tuple(objects)


def _grasp(scene, obj, probability, rng, config, success_kind) -> tuple[SceneState, TransitionOutcome]:
    tag = GRASP_TARGET if obj.is_target else REMOVE_OCCLUDER
    if rng.random() < probability:
        objects = _replace_object(scene, obj.model_copy(update={"removed": True}))
        outcome = TransitionOutcome(success_kind, tag, obj.id, probability)
    else:
        objects = scene.objects
        if config.perturb_on_failure:
            objects = _perturb(scene, obj, rng, config)
        outcome = TransitionOutcome(OutcomeKind.GRASP_FAILED, tag, obj.id, probability)
    return scene.model_copy(update={"objects": objects, "step_count": scene.step_count + 1}), outcome


def execute(
    scene: SceneState, action: ActionPrimitive, scores: GraspScores, config: DynamicsConfig
) -> tuple[SceneState, TransitionOutcome]:
    """Apply one primitive; every call, feasible or not, consumes exactly one motion."""
    if scene.step_count >= config.max_motions:
        raise BudgetExhaustedError(f"motion budget of {config.max_motions} already used")

    # Bernoulli draws are keyed on (seed, step) so a scene replays identically.
    rng = np.random.default_rng([scene.rng_seed, scene.step_count])
    advanced = scene.model_copy(update={"step_count": scene.step_count + 1})

    if isinstance(action, MoveView):
        moved = advanced.model_copy(update={"camera": action.pose})
        return moved, TransitionOutcome(OutcomeKind.VIEW_MOVED, action.tag)

    if isinstance(action, GraspTarget):
        target = scene.target
        if target.removed:
            return advanced, TransitionOutcome(OutcomeKind.INFEASIBLE, action.tag, target.id, detail="target already removed")
        return _grasp(scene, target, scores.q_target, rng, config, OutcomeKind.TARGET_EXTRACTED)

    if isinstance(action, RemoveOccluder):
        obj = scene.get(action.object_id) if action.object_id is not None else None
        if obj is None or obj.removed or obj.is_target:
            reason = "no eligible occluder" if obj is None else f"object {obj.id} cannot be removed"
            return advanced, TransitionOutcome(OutcomeKind.INFEASIBLE, action.tag, action.object_id, detail=reason)
        return _grasp(scene, obj, scores.per_object.get(obj.id, 0.0), rng, config, OutcomeKind.OCCLUDER_REMOVED)

    raise TypeError(f"not an action primitive: {action!r}")
