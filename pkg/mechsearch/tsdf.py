"""Truncated signed distance volume with weighted running-average fusion."""
from dataclasses import dataclass, replace

import numpy as np

from .config import NbvConfig
from .geometry import project_points
from .render import DepthRender
from .scene import CameraPose


@dataclass(frozen=True)
class TsdfGrid:
    origin: np.ndarray  # world position of voxel (0, 0, 0)'s lower corner
    voxel_size: float
    dims: tuple[int, int, int]
    values: np.ndarray  # dims-shaped, within [-truncation, truncation]
    weights: np.ndarray  # dims-shaped, 0 = unobserved
    truncation: float
    weight_cap: float

    def voxel_centers(self) -> np.ndarray:
        idx = np.indices(self.dims).reshape(3, -1).T
        return self.origin + (idx + 0.5) * self.voxel_size

    def observed(self) -> np.ndarray:
        return self.weights > 0


def new_grid(origin, dims, voxel_size: float, truncation: float, weight_cap: float) -> TsdfGrid:
    dims = tuple(int(d) for d in dims)
    return TsdfGrid(
        origin=np.asarray(origin, dtype=float),
        voxel_size=float(voxel_size),
        dims=dims,
        values=np.full(dims, float(truncation)),
        weights=np.zeros(dims),
        truncation=float(truncation),
        weight_cap=float(weight_cap),
    )


def workspace_grid(config: NbvConfig, workspace: float) -> TsdfGrid:
    """Empty volume spanning the workspace square and ``grid_z_range``."""
    z0, z1 = config.grid_z_range
    half = workspace / 2.0
    n_xy = int(round(workspace / config.voxel_size))
    n_z = int(round((z1 - z0) / config.voxel_size))
    return new_grid(
        origin=(-half, -half, z0),
        dims=(n_xy, n_xy, n_z),
        voxel_size=config.voxel_size,
        truncation=config.truncation_mult * config.voxel_size,
        weight_cap=config.weight_cap,
    )


def tsdf_integrate(grid: TsdfGrid, render: DepthRender, camera: CameraPose, pixel_mask: np.ndarray | None = None) -> TsdfGrid:
    """Fuse one depth frame; returns a new grid.

    Voxels whose projected pixel is outside ``pixel_mask`` (when given) or that
    lie more than one truncation distance behind the observed surface are left
    untouched.
    """
    height, width = render.depth.shape
    focal = camera.focal_px * width / camera.width
    centers = grid.voxel_centers()
    row, col, z, in_image = project_points(centers, camera.position, camera.look_at, focal, width, height)

    update = in_image.copy()
    r, c = row[update], col[update]
    sdf = np.zeros(centers.shape[0])
    sdf[update] = render.depth[r, c] - z[update]
    update &= sdf >= -grid.truncation
    if pixel_mask is not None:
        allowed = np.zeros(centers.shape[0], dtype=bool)
        allowed[in_image] = pixel_mask[row[in_image], col[in_image]].astype(bool)
        update &= allowed

    values = grid.values.reshape(-1).copy()
    weights = grid.weights.reshape(-1).copy()
    sample = np.clip(sdf[update], -grid.truncation, grid.truncation)
    w = weights[update]
    values[update] = (w * values[update] + sample) / (w + 1.0)
    weights[update] = np.minimum(w + 1.0, grid.weight_cap)
    return replace(grid, values=values.reshape(grid.dims), weights=weights.reshape(grid.dims))


def column_zero_crossing(grid: TsdfGrid, i: int, j: int) -> float | None:
    """Height of the first positive-to-negative crossing in a vertical voxel column, top down."""
    values = grid.values[i, j, :]
    observed = grid.weights[i, j, :] > 0
    zs = grid.origin[2] + (np.arange(grid.dims[2]) + 0.5) * grid.voxel_size
    for k in range(grid.dims[2] - 1, 0, -1):
        if observed[k] and observed[k - 1] and values[k] > 0 >= values[k - 1]:
            a, b = values[k], values[k - 1]
            return float(zs[k] - (zs[k] - zs[k - 1]) * a / (a - b))
    return None
