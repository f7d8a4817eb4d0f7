import numpy as np
import pytest

from mechsearch.config import RunConfig
from mechsearch.env import StepResult
from mechsearch.perception import FEATURE_DIM, Observation, OdmMap, TargetMask
from mechsearch.scene import CameraPose, ObjectInstance, SceneState


@pytest.fixture
def config():
    return RunConfig()


@pytest.fixture
def top_camera():
    def make(height: float = 1.0, size: int = 64, focal: float = 55.0) -> CameraPose:
        # a hair off-axis so the look direction is never exactly vertical
        return CameraPose(position=(0.0, -1e-4, height), look_at=(0.0, 0.0, 0.0), focal_px=focal, width=size, height=size)

    return make


@pytest.fixture
def make_scene(config):
    """Build a scene from (footprint, height) pairs; the first box is the target unless ``target`` says otherwise."""

    def make(boxes, camera=None, target: int = 1, seed: int = 0) -> SceneState:
        objects = tuple(
            ObjectInstance(id=i + 1, footprint=tuple(fp), height=h, is_target=(i + 1 == target))
            for i, (fp, h) in enumerate(boxes)
        )
        if camera is None:
            sc = config.scene
            camera = CameraPose(
                position=sc.camera_position,
                look_at=sc.camera_look_at,
                focal_px=sc.focal_px,
                width=sc.image_width,
                height=sc.image_height,
            )
        return SceneState(objects=objects, camera=camera, rng_seed=seed)

    return make


@pytest.fixture
def feature_observation():
    def make(features) -> Observation:
        features = np.asarray(features, dtype=float)
        assert features.shape == (FEATURE_DIM,)
        return Observation(
            target_mask=TargetMask(np.zeros((2, 2), dtype=np.uint8)),
            odm=OdmMap(np.zeros((2, 2))),
            features=features,
        )

    return make


class GateEnv:
    """Stand-in environment: success when tau1 is at or below the grasp score shown in the features."""

    def __init__(self, horizon: int = 10):
        self.horizon = horizon
        self._rng = None
        self._obs = None
        self._steps = 0

    def _draw(self) -> Observation:
        features = np.zeros(FEATURE_DIM)
        features[5] = self._rng.uniform()
        self._obs = Observation(
            target_mask=TargetMask(np.zeros((2, 2), dtype=np.uint8)),
            odm=OdmMap(np.zeros((2, 2))),
            features=features,
        )
        return self._obs

    def reset(self, seed: int) -> Observation:
        self._rng = np.random.default_rng(seed)
        self._steps = 0
        return self._draw()

    def step(self, choice):
        self._steps += 1
        success = bool(choice.tau1 <= self._obs.features[5])
        done = success or self._steps >= self.horizon
        reward = 1000.0 if success else -100.0
        return StepResult(self._draw(), reward, done, success)


@pytest.fixture
def gate_env():
    return GateEnv
