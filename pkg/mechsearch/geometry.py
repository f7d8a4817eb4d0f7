"""Pinhole camera frames and vectorized ray/box intersection.

Ray directions are scaled so that their dot product with the optical axis is
one; the ray parameter ``t`` is therefore the z-depth of the hit point.
"""
import numpy as np

from .shared import TABLE_HEIGHT

WORLD_UP = np.array([0.0, 0.0, 1.0])
FALLBACK_UP = np.array([0.0, 1.0, 0.0])


def camera_frame(position, look_at) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (right, down, forward) unit vectors for a camera."""
    forward = np.asarray(look_at, dtype=float) - np.asarray(position, dtype=float)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, WORLD_UP)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, FALLBACK_UP)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return right, down, forward


def pixel_rays(position, look_at, focal_px: float, width: int, height: int) -> np.ndarray:
    """Ray directions through every pixel center, row-major, shape (H*W, 3)."""
    right, down, forward = camera_frame(position, look_at)
    xs = (np.arange(width) + 0.5 - width / 2.0) / focal_px
    ys = (np.arange(height) + 0.5 - height / 2.0) / focal_px
    gx, gy = np.meshgrid(xs, ys)
    return forward + gx.reshape(-1, 1) * right + gy.reshape(-1, 1) * down


def project_points(points: np.ndarray, position, look_at, focal_px: float, width: int, height: int):
    """Project world points; returns (row, col, z_depth, in_image)."""
    right, down, forward = camera_frame(position, look_at)
    rel = points - np.asarray(position, dtype=float)
    z = rel @ forward
    safe_z = np.where(z > 1e-9, z, 1.0)
    u = focal_px * (rel @ right) / safe_z + width / 2.0
    v = focal_px * (rel @ down) / safe_z + height / 2.0
    col = np.floor(u).astype(np.int64)
    row = np.floor(v).astype(np.int64)
    in_image = (z > 1e-9) & (col >= 0) & (col < width) & (row >= 0) & (row < height)
    return row, col, z, in_image


def ray_box_intervals(origin, directions: np.ndarray, box_min: np.ndarray, box_max: np.ndarray):
    """Slab test of P rays against N axis-aligned boxes.

    Returns (t_near, t_far), each shape (P, N); a ray misses a box when
    t_near > t_far or t_far <= 0.
    """
    origin = np.asarray(origin, dtype=float)
    d = np.where(directions == 0.0, 1e-12, directions)[:, None, :]
    t1 = (box_min[None, :, :] - origin) / d
    t2 = (box_max[None, :, :] - origin) / d
    t_near = np.minimum(t1, t2).max(axis=2)
    t_far = np.maximum(t1, t2).min(axis=2)
    return t_near, t_far


def ray_box_depths(origin, directions: np.ndarray, box_min: np.ndarray, box_max: np.ndarray) -> np.ndarray:
    """Entry depth of each ray into each box, ``inf`` where it misses. Shape (P, N)."""
    if box_min.shape[0] == 0:
        return np.empty((directions.shape[0], 0))
    t_near, t_far = ray_box_intervals(origin, directions, box_min, box_max)
    hit = (t_near <= t_far) & (t_far > 0)
    return np.where(hit, np.maximum(t_near, 0.0), np.inf)


def table_depths(origin, directions: np.ndarray, max_depth: float) -> np.ndarray:
    """Depth where each ray meets the table plane, ``max_depth`` if it never does."""
    dz = directions[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (TABLE_HEIGHT - float(origin[2])) / dz
    return np.where((dz < 0) & (t > 0), np.minimum(t, max_depth), max_depth)
