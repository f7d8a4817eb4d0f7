"""Priority-guided action selection and the flat ablation's argmax rule."""
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .dynamics import ActionPrimitive, GraspTarget, MoveView, RemoveOccluder
from .errors import ScoresInconsistentError
from .grasp_oracle import GraspScores
from .scene import CameraPose

PoseSource = Union[CameraPose, Callable[[], CameraPose]]


@dataclass(frozen=True)
class Thresholds:
    tau1: float
    tau2: float

    def __post_init__(self):
        for name in ("tau1", "tau2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    @classmethod
    def clamped(cls, tau1: float, tau2: float) -> "Thresholds":
        return cls(float(np.clip(tau1, 0.0, 1.0)), float(np.clip(tau2, 0.0, 1.0)))


def _resolve(pose: PoseSource) -> CameraPose:
    return pose() if callable(pose) else pose


def decide(thresholds: Thresholds, scores: GraspScores, nbv_pose: PoseSource) -> ActionPrimitive:
    """Grasp the target, else remove the best occluder, else move to the next best view.

    ``nbv_pose`` may be a callable; it is only invoked when both gates fail.
    """
    if scores.q_target >= thresholds.tau1:
        return GraspTarget()
    # no eligible occluder (q_occlude == 0, none named) closes the removal gate even at tau2 == 0
    has_occluder = scores.best_occluder is not None or scores.q_occlude > 0.0
    if has_occluder and scores.q_occlude >= thresholds.tau2:
        if scores.best_occluder is None:
            raise ScoresInconsistentError(
                f"q_occlude={scores.q_occlude} passed tau2={thresholds.tau2} but no occluder is named"
            )
        return RemoveOccluder(object_id=scores.best_occluder)
    return MoveView(pose=_resolve(nbv_pose))


def decide_flat(action_logits, scores: GraspScores, nbv_pose: PoseSource) -> ActionPrimitive:
    """Argmax over (grasp target, remove occluder, move view); first index wins ties."""
    logits = np.asarray(action_logits, dtype=float)
    if logits.shape != (3,) or not np.all(np.isfinite(logits)):
        raise ValueError(f"expected 3 finite logits, got {action_logits!r}")
    choice = int(np.argmax(logits))
    if choice == 0:
        return GraspTarget()
    if choice == 1:
        # object_id None is executed as an infeasible action
        return RemoveOccluder(object_id=scores.best_occluder)
    return MoveView(pose=_resolve(nbv_pose))
