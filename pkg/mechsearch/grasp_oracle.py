"""Deterministic grasp-quality oracle.

Score of an object = visibility ** alpha * clearance ** beta, where visibility is
the fraction of its unoccluded projection that is actually visible and
clearance is the fraction of probe points around its footprint that are free.
Scores double as grasp success probabilities during execution.
"""
from dataclasses import dataclass

import numpy as np

from .config import OracleConfig
from .render import DepthRender, RayHits, cast_rays, projection_counts, visible_counts
from .scene import ObjectInstance, SceneState


@dataclass(frozen=True)
class GraspScores:
    per_object: dict[int, float]
    q_target: float
    q_occlude: float
    best_occluder: int | None
    eligible_occluders: tuple[int, ...] = ()


def object_score(visibility: float, clearance: float, config: OracleConfig) -> float:
    if visibility <= 0.0:
        return 0.0
    score = min(visibility, 1.0) ** config.alpha * min(max(clearance, 0.0), 1.0) ** config.beta
    return float(score)


def _probe_points(footprint: tuple, radius: float, n: int) -> np.ndarray:
    xmin, ymin, xmax, ymax = footprint
    xmin, ymin, xmax, ymax = xmin - radius, ymin - radius, xmax + radius, ymax + radius
    w, h = xmax - xmin, ymax - ymin
    s = np.arange(n) * (2 * (w + h) / n)
    # walk the perimeter counter-clockwise from (xmin, ymin)
    x = np.select([s < w, s < w + h, s < 2 * w + h], [xmin + s, xmax, xmax - (s - w - h)], xmin)
    y = np.select([s < w, s < w + h, s < 2 * w + h], [ymin, ymin + (s - w), ymax], ymax - (s - 2 * w - h))
    return np.stack([x, y], axis=1)


def clearance(obj: ObjectInstance, scene: SceneState, config: OracleConfig) -> float:
    """Fraction of probe points at ``clearance_radius`` around the footprint not covered by a neighbor."""
    others = [o.footprint for o in scene.objects if not o.removed and o.id != obj.id]
    if not others:
        return 1.0
    pts = _probe_points(obj.footprint, config.clearance_radius, config.clearance_samples)
    fps = np.array(others)
    inside = (
        (pts[:, None, 0] >= fps[None, :, 0])
        & (pts[:, None, 0] <= fps[None, :, 2])
        & (pts[:, None, 1] >= fps[None, :, 1])
        & (pts[:, None, 1] <= fps[None, :, 3])
    ).any(axis=1)
    return float(1.0 - inside.mean())


def _blocking_objects(hits: RayHits, render: DepthRender, target_id: int) -> set[int]:
    column = np.flatnonzero(hits.object_ids == target_id)
    if column.size == 0:
        return set()
    under_target = np.isfinite(hits.depths[:, column[0]])
    ids = set(np.unique(render.instance.ravel()[under_target]).tolist())
    return ids - {0, target_id}


def score_scene(scene: SceneState, render: DepthRender, config: OracleConfig, hits: RayHits | None = None) -> GraspScores:
    """Score every non-removed object as seen by ``scene.camera``."""
    hits = hits if hits is not None else cast_rays(scene, scene.camera)
    projected = projection_counts(hits)
    visible = visible_counts(render)
    target_id = scene.target_id

    per_object: dict[int, float] = {}
    for obj in scene.active_objects():
        full = projected.get(obj.id, 0)
        vis = visible.get(obj.id, 0) / full if full else 0.0
        per_object[obj.id] = object_score(vis, clearance(obj, scene, config), config) if vis > 0 else 0.0

    eligible = [i for i in sorted(per_object) if i != target_id and visible.get(i, 0) > 0]
    if config.strict_occluders:
        blocking = _blocking_objects(hits, render, target_id)
        eligible = [i for i in eligible if i in blocking]

    best = None
    for i in eligible:
        if best is None or per_object[i] > per_object[best]:
            best = i
    return GraspScores(
        per_object=per_object,
        q_target=per_object.get(target_id, 0.0),
        q_occlude=per_object[best] if best is not None else 0.0,
        best_occluder=best,
        eligible_occluders=tuple(eligible),
    )
