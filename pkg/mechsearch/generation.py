"""Seeded scene generation: random clutter and the fully-occluded-target family."""
import logging

import numpy as np

from .config import SceneConfig
from .errors import SceneGenerationError
from .render import render, visible_counts
from .scene import CameraPose, ObjectInstance, SceneState

logger = logging.getLogger(__name__)

WALL_THICKNESS = 0.02
WALL_GAP = 0.01
WALL_MARGIN = 0.03
WALL_MAX_HEIGHT = 0.4


def spawn_camera(config: SceneConfig) -> CameraPose:
    return CameraPose(
        position=config.camera_position,
        look_at=config.camera_look_at,
        focal_px=config.focal_px,
        width=config.image_width,
        height=config.image_height,
    )


def overlap_fraction(a: tuple, b: tuple) -> float:
    """Intersection area over the smaller footprint's area."""
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0.0
    smaller = min((a[2] - a[0]) * (a[3] - a[1]), (b[2] - b[0]) * (b[3] - b[1]))
    return w * h / smaller


def _sample_footprint(rng: np.random.Generator, config: SceneConfig) -> tuple[tuple, float]:
    half = config.workspace_size / 2.0
    w, d = rng.uniform(*config.side_range, size=2)
    h = rng.uniform(*config.height_range)
    cx = rng.uniform(-half + w / 2.0, half - w / 2.0)
    cy = rng.uniform(-half + d / 2.0, half - d / 2.0)
    return (cx - w / 2.0, cy - d / 2.0, cx + w / 2.0, cy + d / 2.0), float(h)


def _place(rng: np.random.Generator, config: SceneConfig, placed: list[tuple]) -> tuple[tuple, float]:
    for _ in range(config.max_rejection_tries):
        footprint, height = _sample_footprint(rng, config)
        if all(overlap_fraction(footprint, other) <= config.overlap_tolerance for other in placed):
            return tuple(float(v) for v in footprint), height
    raise SceneGenerationError(
        f"could not place object {len(placed) + 1} after {config.max_rejection_tries} tries; "
        f"lower the object count or raise overlap_tolerance"
    )


def _random_scene(n_objects: int, seed: int, config: SceneConfig, rng: np.random.Generator) -> SceneState:
    placed: list[tuple] = []
    heights: list[float] = []
    for _ in range(n_objects):
        footprint, height = _place(rng, config, placed)
        placed.append(footprint)
        heights.append(height)
    target_index = int(rng.integers(n_objects))
    objects = tuple(
        ObjectInstance(id=i + 1, footprint=fp, height=h, is_target=(i == target_index))
        for i, (fp, h) in enumerate(zip(placed, heights))
    )
    return SceneState(objects=objects, workspace=config.workspace_size, camera=spawn_camera(config), rng_seed=seed)


def _wall_footprint(target: tuple, camera_xy: np.ndarray) -> tuple:
    cx, cy = (target[0] + target[2]) / 2.0, (target[1] + target[3]) / 2.0
    toward = camera_xy - np.array([cx, cy])
    if abs(toward[1]) >= abs(toward[0]):
        offset = np.sign(toward[1]) * ((target[3] - target[1]) / 2.0 + WALL_GAP + WALL_THICKNESS / 2.0)
        half_w = (target[2] - target[0]) / 2.0 + WALL_MARGIN
        return (cx - half_w, cy + offset - WALL_THICKNESS / 2.0, cx + half_w, cy + offset + WALL_THICKNESS / 2.0)
    offset = np.sign(toward[0]) * ((target[2] - target[0]) / 2.0 + WALL_GAP + WALL_THICKNESS / 2.0)
    half_d = (target[3] - target[1]) / 2.0 + WALL_MARGIN
    return (cx + offset - WALL_THICKNESS / 2.0, cy - half_d, cx + offset + WALL_THICKNESS / 2.0, cy + half_d)


def _occluded_scene(n_objects: int, seed: int, config: SceneConfig, rng: np.random.Generator) -> SceneState:
    if n_objects < 2:
        raise SceneGenerationError("the occluded family needs at least 2 objects (target + wall)")
    camera = spawn_camera(config)
    lo = config.side_range[0]
    w, d = rng.uniform(lo, (lo + config.side_range[1]) / 2.0, size=2)
    target_h = float(rng.uniform(config.height_range[0], min(config.height_range[0] + 0.02, config.height_range[1])))
    cx, cy = rng.uniform(-0.1, 0.1, size=2) * config.workspace_size / 0.5
    target_fp = tuple(float(v) for v in (cx - w / 2.0, cy - d / 2.0, cx + w / 2.0, cy + d / 2.0))
    wall_fp = tuple(float(v) for v in _wall_footprint(target_fp, np.array(camera.position[:2])))

    placed = [target_fp, wall_fp]
    heights = [target_h, 0.0]
    for _ in range(n_objects - 2):
        footprint, height = _place(rng, config, placed)
        placed.append(footprint)
        heights.append(height)

    wall_h = config.height_range[1]
    while wall_h <= WALL_MAX_HEIGHT:
        heights[1] = float(wall_h)
        objects = tuple(
            ObjectInstance(id=i + 1, footprint=fp, height=h, is_target=(i == 0))
            for i, (fp, h) in enumerate(zip(placed, heights))
        )
        scene = SceneState(objects=objects, workspace=config.workspace_size, camera=camera, rng_seed=seed, family="occluded")
        if visible_counts(render(scene, camera)).get(1, 0) == 0:
            return scene
        wall_h += 0.03
    raise SceneGenerationError(f"seed {seed}: no wall height up to {WALL_MAX_HEIGHT} m hides the target")


def generate_scene(n_objects: int, seed: int, config: SceneConfig) -> SceneState:
    """Spawn ``n_objects`` boxes by rejection sampling; identical seed and config give an identical scene."""
    if not 1 <= n_objects <= config.max_objects:
        raise SceneGenerationError(f"n_objects must be in [1, {config.max_objects}], got {n_objects}")
    if seed < 0:
        raise SceneGenerationError(f"seed must be non-negative, got {seed}")
    rng = np.random.default_rng(seed)
    if config.family == "occluded":
        scene = _occluded_scene(n_objects, seed, config, rng)
    else:
        scene = _random_scene(n_objects, seed, config, rng)
    logger.debug(f"Generated {config.family} scene seed={seed} n={n_objects} target={scene.target_id}")
    return scene
