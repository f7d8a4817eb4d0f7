"""Depth/instance render -> target mask, object depth mapping (ODM) and feature vector."""
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .config import PerceptionConfig
from .grasp_oracle import GraspScores
from .render import DepthRender

FEATURE_NAMES = (
    "target_visible_fraction",
    "target_mean_depth",
    "visible_object_count",
    "occluder_shade_mean",
    "occluder_shade_max",
    "q_target",
    "q_occlude",
    "progress",
)
FEATURE_DIM = len(FEATURE_NAMES)


@dataclass(frozen=True)
class TargetMask:
    mask: np.ndarray  # (H, W) uint8, 1 = target pixel

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    def to_image(self) -> Image.Image:
        return Image.fromarray((self.mask > 0).astype(np.uint8) * 255)


@dataclass(frozen=True)
class OdmMap:
    shades: np.ndarray  # (H, W) in [0, 1], background 0
    object_order: list[tuple[int, float]] = field(default_factory=list)  # farthest -> nearest

    def shade_of(self, object_id: int) -> float:
        n = len(self.object_order)
        for i, (oid, _) in enumerate(self.object_order):
            if oid == object_id:
                return (i + 1) / n
        return 0.0

    def to_image(self) -> Image.Image:
        return Image.fromarray(np.round(self.shades * 255).astype(np.uint8))


@dataclass(frozen=True)
class Observation:
    target_mask: TargetMask
    odm: OdmMap
    features: np.ndarray  # (FEATURE_DIM,)

    def stacked(self) -> np.ndarray:
        """(2, H, W) frames for the convolutional encoder: target mask then ODM."""
        return np.stack([self.target_mask.mask.astype(float), self.odm.shades])

    def to_dict(self, include_grids: bool = False) -> dict:
        data = {
            "features": dict(zip(FEATURE_NAMES, (float(v) for v in self.features))),
            "odm_order": [[oid, depth] for oid, depth in self.odm.object_order],
            "target_pixels": self.target_mask.pixel_count,
        }
        if include_grids:
            data["target_mask"] = self.target_mask.mask.tolist()
            data["odm_shades"] = self.odm.shades.round(6).tolist()
        return data


def build_target_mask(render: DepthRender, target_id: int) -> TargetMask:
    return TargetMask(mask=(render.instance == target_id).astype(np.uint8))


def build_odm(render: DepthRender) -> OdmMap:
    """Shade objects by rank of their mean visible depth, farthest darkest, ties by ascending id."""
    instance = render.instance
    ids = np.unique(instance[instance > 0])
    shades = np.zeros(instance.shape, dtype=float)
    if ids.size == 0:
        return OdmMap(shades=shades, object_order=[])

    flat_ids = instance.ravel()
    flat_depth = render.depth.ravel()
    means = [(int(i), float(flat_depth[flat_ids == i].mean())) for i in ids]
    order = sorted(means, key=lambda item: (-item[1], item[0]))
    n = len(order)
    for rank, (oid, _) in enumerate(order):
        shades[instance == oid] = (rank + 1) / n
    return OdmMap(shades=shades, object_order=order)


def build_observation(
    render: DepthRender,
    target_id: int,
    scores: GraspScores,
    step_count: int,
    config: PerceptionConfig,
    max_motions: int,
) -> Observation:
    mask = build_target_mask(render, target_id)
    odm = build_odm(render)
    n_pixels = render.instance.size

    target_pixels = mask.mask.astype(bool)
    if target_pixels.any():
        target_depth = min(float(render.depth[target_pixels].mean()) / config.depth_scale, 1.0)
    else:
        target_depth = 0.0

    occluder_shades = [(i + 1) / len(odm.object_order) for i, (oid, _) in enumerate(odm.object_order) if oid != target_id]
    features = np.array(
        [
            mask.pixel_count / n_pixels,
            target_depth,
            min(len(odm.object_order) / config.max_visible_objects, 1.0),
            float(np.mean(occluder_shades)) if occluder_shades else 0.0,
            max(occluder_shades, default=0.0),
            scores.q_target,
            scores.q_occlude,
            min(step_count / max_motions, 1.0),
        ],
        dtype=float,
    )
    return Observation(target_mask=mask, odm=odm, features=features)
