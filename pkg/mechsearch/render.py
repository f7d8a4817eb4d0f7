"""Simulated depth/instance sensor for the box world."""
from dataclasses import dataclass

import numpy as np

from .geometry import pixel_rays, ray_box_depths, table_depths
from .scene import CameraPose, SceneState
from .shared import MAX_DEPTH


@dataclass(frozen=True)
class DepthRender:
    depth: np.ndarray  # (H, W) z-depth in meters
    instance: np.ndarray  # (H, W) object ids, 0 = background

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class RayHits:
    """Per-pixel entry depth into every non-removed object, before occlusion is resolved."""

    object_ids: np.ndarray  # (N,)
    depths: np.ndarray  # (H*W, N), inf = miss
    background: np.ndarray  # (H*W,)
    shape: tuple[int, int]


def _boxes(scene: SceneState):
    active = scene.active_objects()
    ids = np.array([o.id for o in active], dtype=np.int64)
    box_min = np.array([[o.footprint[0], o.footprint[1], 0.0] for o in active]).reshape(-1, 3)
    box_max = np.array([[o.footprint[2], o.footprint[3], o.height] for o in active]).reshape(-1, 3)
    return ids, box_min, box_max


def cast_rays(scene: SceneState, camera: CameraPose, width: int | None = None, height: int | None = None) -> RayHits:
    width = width or camera.width
    height = height or camera.height
    focal = camera.focal_px * width / camera.width
    dirs = pixel_rays(camera.position, camera.look_at, focal, width, height)
    ids, box_min, box_max = _boxes(scene)
    return RayHits(
        object_ids=ids,
        depths=ray_box_depths(camera.position, dirs, box_min, box_max),
        background=table_depths(camera.position, dirs, MAX_DEPTH),
        shape=(height, width),
    )


def render_from_hits(hits: RayHits) -> DepthRender:
    depth = hits.background.copy()
    instance = np.zeros(depth.shape, dtype=np.int64)
    if hits.object_ids.size:
        # argmin keeps the lowest column (lowest id) on exact depth ties
        nearest = hits.depths.argmin(axis=1)
        nearest_depth = hits.depths[np.arange(depth.size), nearest]
        won = nearest_depth < depth
        depth[won] = nearest_depth[won]
        instance[won] = hits.object_ids[nearest[won]]
    return DepthRender(depth=depth.reshape(hits.shape), instance=instance.reshape(hits.shape))


def render(scene: SceneState, camera: CameraPose) -> DepthRender:
    return render_from_hits(cast_rays(scene, camera))


def projection_counts(hits: RayHits) -> dict[int, int]:
    """Pixels each object would cover if nothing else were in the scene."""
    unoccluded = np.isfinite(hits.depths) & (hits.depths < hits.background[:, None])
    return {int(i): int(c) for i, c in zip(hits.object_ids, unoccluded.sum(axis=0))}


def visible_counts(render: DepthRender) -> dict[int, int]:
    ids, counts = np.unique(render.instance[render.instance > 0], return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}
