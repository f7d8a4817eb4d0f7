"""Episode environment: seeded scene, per-episode TSDF volumes, observation and action resolution."""
import logging
from typing import NamedTuple

import numpy as np

from .config import RunConfig
from .decision import Thresholds, decide, decide_flat
from .dynamics import ActionPrimitive, MoveView, TransitionOutcome, aborted_outcome, execute
from .generation import generate_scene
from .grasp_oracle import GraspScores, score_scene
from .nbv import candidate_ring, plan_nbv
from .perception import Observation, build_observation
from .ppo import reward
from .render import DepthRender, cast_rays, render_from_hits
from .scene import CameraPose, SceneState
from .shared import ACTION_TAGS, METHODS
from .tsdf import TsdfGrid, tsdf_integrate, workspace_grid

logger = logging.getLogger(__name__)


def head_for(method: str) -> str:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {list(METHODS)}")
    return "flat" if method == "flat_policy" else "thresholds"


class StepResult(NamedTuple):
    observation: Observation
    reward: float
    done: bool
    success: bool
    outcome: TransitionOutcome | None = None
    action: ActionPrimitive | None = None
    scores: GraspScores | None = None
    thresholds: Thresholds | None = None


class MechanicalSearchEnv:
    """One tabletop at a time; ``reset`` draws a new scene, ``step`` spends one motion.

    ``method`` decides how a step's choice becomes an action: thresholds run the
    priority cascade, an integer picks a primitive directly (flat_policy), and
    no_nbv ends the episode instead of moving the camera.
    """

    def __init__(self, config: RunConfig, method: str = "xpg", n_objects: int | None = None, family: str | None = None):
        self.config = config
        self.method = method
        self.head = head_for(method)
        self.n_objects = n_objects if n_objects is not None else config.scene.n_objects
        self.scene_config = config.scene if family is None else config.scene.model_copy(update={"family": family})
        self.scene: SceneState | None = None
        self.grid: TsdfGrid | None = None
        self.belief: TsdfGrid | None = None
        self.render: DepthRender | None = None
        self.scores: GraspScores | None = None
        self.observation: Observation | None = None
        self.episode_seed: int | None = None
        self.done = True

    def _object_count(self, seed: int) -> int:
        if self.n_objects is not None:
            return self.n_objects
        lo, hi = self.scene_config.min_objects, self.scene_config.max_objects
        return int(np.random.default_rng([seed, 1]).integers(lo, hi + 1))

    def reset(self, seed: int) -> Observation:
        self.episode_seed = seed
        self.scene = generate_scene(self._object_count(seed), seed, self.scene_config)
        self.grid = workspace_grid(self.config.nbv, self.scene.workspace)
        self.belief = workspace_grid(self.config.nbv, self.scene.workspace)
        self.done = False
        logger.debug(f"reset seed={seed} objects={len(self.scene.objects)} family={self.scene.family}")
        return self._observe()

    def _observe(self) -> Observation:
        scene, camera = self.scene, self.scene.camera
        hits = cast_rays(scene, camera)
        self.render = render_from_hits(hits)
        self.grid = tsdf_integrate(self.grid, self.render, camera)
        target_pixels = self.render.instance == scene.target_id
        if target_pixels.any():
            self.belief = tsdf_integrate(self.belief, self.render, camera, pixel_mask=target_pixels)
        self.scores = score_scene(scene, self.render, self.config.oracle, hits)
        self.observation = build_observation(
            self.render,
            scene.target_id,
            self.scores,
            scene.step_count,
            self.config.perception,
            self.config.dynamics.max_motions,
        )
        return self.observation

    def view_candidates(self) -> list[CameraPose]:
        ring = candidate_ring(self.config.nbv, self.scene.camera)
        if self.config.nbv.skip_current_view:
            others = [pose for pose in ring if not pose.same_view(self.scene.camera)]
            ring = others or ring
        return ring

    def plan_view(self) -> CameraPose:
        best = plan_nbv(
            self.grid, self.belief, self.scene.target_id, self.view_candidates(), self.config.nbv, self.config.oracle
        )
        logger.debug(f"NBV chose {best.pose.position} (predicted q={best.predicted_q_target:.3f})")
        return best.pose

    def resolve(self, choice: Thresholds | int) -> ActionPrimitive:
        """Turn a policy output into an action primitive for the current observation."""
        if self.head == "flat":
            logits = np.eye(len(ACTION_TAGS))[int(choice)]
            return decide_flat(logits, self.scores, self.plan_view)
        if self.method == "no_nbv":
            # the pose is never executed; a MoveView decision aborts the episode
            return decide(choice, self.scores, self.scene.camera)
        return decide(choice, self.scores, self.plan_view)

    def step(self, choice: Thresholds | int) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        scores = self.scores
        action = self.resolve(choice)
        thresholds = choice if isinstance(choice, Thresholds) else None

        if self.method == "no_nbv" and isinstance(action, MoveView):
            outcome = aborted_outcome()
            self.done = True
            return StepResult(self.observation, reward(outcome), True, False, outcome, action, scores, thresholds)

        self.scene, outcome = execute(self.scene, action, scores, self.config.dynamics)
        success = outcome.success
        self.done = success or self.scene.step_count >= self.config.dynamics.max_motions
        logger.debug(f"step {self.scene.step_count}: {action.tag} -> {outcome.kind.value}")
        if not self.done:
            self._observe()
        return StepResult(self.observation, reward(outcome), self.done, success, outcome, action, scores, thresholds)
