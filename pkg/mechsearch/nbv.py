"""Next-best-view planning over a fused TSDF.

Each candidate pose is ray-marched through the geometry volume; the target
region is where the target-belief volume saw target surface, or, when the
target was never seen, the unobserved space near the table. The candidate
whose synthesized view exposes the largest share of the target region wins.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .config import NbvConfig, OracleConfig
from .geometry import pixel_rays, ray_box_intervals
from .grasp_oracle import object_score
from .scene import CameraPose
from .shared import TABLE_HEIGHT
from .tsdf import TsdfGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViewCandidate:
    pose: CameraPose
    predicted_q_target: float

    def __post_init__(self):
        if not 0.0 <= self.predicted_q_target <= 1.0:
            raise ValueError(f"predicted score {self.predicted_q_target} outside [0, 1]")


@dataclass(frozen=True)
class SynthesizedView:
    projected_rays: int
    visible_rays: int

    @property
    def visibility(self) -> float:
        return self.visible_rays / self.projected_rays if self.projected_rays else 0.0


def candidate_ring(config: NbvConfig, template: CameraPose, center=(0.0, 0.0, 0.0)) -> list[CameraPose]:
    """Poses on a ring of azimuths at each configured elevation, all looking at ``center``."""
    poses = []
    cx, cy, cz = center
    for elevation in config.elevations_deg:
        el = np.deg2rad(elevation)
        for k in range(config.azimuth_count):
            az = 2.0 * np.pi * k / config.azimuth_count
            position = (
                float(cx + config.ring_radius * np.cos(el) * np.cos(az)),
                float(cy + config.ring_radius * np.cos(el) * np.sin(az)),
                float(cz + config.ring_radius * np.sin(el)),
            )
            poses.append(
                CameraPose(
                    position=position,
                    look_at=tuple(float(v) for v in center),
                    focal_px=template.focal_px,
                    width=template.width,
                    height=template.height,
                )
            )
    return poses


def _lookup(grid: TsdfGrid, points: np.ndarray):
    idx = np.floor((points - grid.origin) / grid.voxel_size).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.array(grid.dims)), axis=-1)
    idx = np.where(inside[..., None], idx, 0)
    values = grid.values[idx[..., 0], idx[..., 1], idx[..., 2]]
    weights = grid.weights[idx[..., 0], idx[..., 1], idx[..., 2]]
    return inside, values, np.where(inside, weights, 0.0)


def synthesize_view(grid: TsdfGrid, belief: TsdfGrid, camera: CameraPose, config: NbvConfig) -> SynthesizedView:
    size = config.render_size
    height = max(1, int(round(size * camera.height / camera.width)))
    focal = camera.focal_px * size / camera.width
    origin = np.asarray(camera.position, dtype=float)
    dirs = pixel_rays(camera.position, camera.look_at, focal, size, height)

    lo = grid.origin
    hi = grid.origin + np.array(grid.dims) * grid.voxel_size
    t_near, t_far = ray_box_intervals(origin, dirs, lo[None, :], hi[None, :])
    t_near, t_far = np.maximum(t_near[:, 0], 0.0), t_far[:, 0]
    crosses = t_near < t_far

    dt = grid.voxel_size / np.linalg.norm(dirs, axis=1)
    span = np.where(crosses, (t_far - t_near) / dt, 0.0)
    n_samples = int(np.ceil(span.max())) if crosses.any() else 0
    if n_samples == 0:
        return SynthesizedView(0, 0)

    ts = t_near[:, None] + (np.arange(n_samples)[None, :] + 0.5) * dt[:, None]
    valid = crosses[:, None] & (ts < t_far[:, None])
    points = origin + ts[..., None] * dirs[:, None, :]

    inside, values, weights = _lookup(grid, points)
    valid &= inside
    surface = valid & (weights > 0) & (values <= 0)

    if belief.weights.any():
        _, b_values, b_weights = _lookup(belief, points)
        target = valid & (b_weights > 0) & (b_values <= grid.voxel_size)
    else:
        z = points[..., 2]
        target = valid & (weights == 0) & (z >= TABLE_HEIGHT) & (z <= config.target_max_height)

    first_surface = np.where(surface.any(axis=1), surface.argmax(axis=1), n_samples)
    first_target = np.where(target.any(axis=1), target.argmax(axis=1), n_samples + 1)
    projected = target.any(axis=1)
    visible = projected & (first_target <= first_surface)
    return SynthesizedView(projected_rays=int(projected.sum()), visible_rays=int(visible.sum()))


def plan_nbv(
    grid: TsdfGrid,
    scene_belief: TsdfGrid,
    target_id: int,
    candidates: list[CameraPose],
    config: NbvConfig,
    oracle: OracleConfig | None = None,
) -> ViewCandidate:
    """Return the candidate with the highest predicted target grasp quality; list order breaks ties."""
    if not candidates:
        raise ValueError("plan_nbv needs at least one candidate viewpoint")
    oracle = oracle or OracleConfig()
    best: ViewCandidate | None = None
    for pose in candidates:
        view = synthesize_view(grid, scene_belief, pose, config)
        # clearance is view-independent, so only visibility ranks candidates
        q = object_score(view.visibility, 1.0, oracle)
        logger.debug(f"NBV target={target_id} pose={pose.position} visible={view.visible_rays}/{view.projected_rays} q={q:.3f}")
        if best is None or q > best.predicted_q_target:
            best = ViewCandidate(pose=pose, predicted_q_target=q)
    return best
