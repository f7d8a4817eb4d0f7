import numpy as np
import pytest

from mechsearch.config import SceneConfig
from mechsearch.generation import generate_scene
from mechsearch.geometry import camera_frame, pixel_rays, project_points
from mechsearch.render import cast_rays, projection_counts, render, render_from_hits, visible_counts
from mechsearch.shared import MAX_DEPTH


def brute_force_pixel(origin, direction, scene):
    """Nearest box hit along one ray, one box and one slab at a time."""
    best_t, best_id = np.inf, 0
    for o in scene.active_objects():
        lo = np.array([o.footprint[0], o.footprint[1], 0.0])
        hi = np.array([o.footprint[2], o.footprint[3], o.height])
        t0, t1 = -np.inf, np.inf
        for axis in range(3):
            if abs(direction[axis]) < 1e-15:
                if not lo[axis] <= origin[axis] <= hi[axis]:
                    t0, t1 = np.inf, -np.inf
                continue
            a = (lo[axis] - origin[axis]) / direction[axis]
            b = (hi[axis] - origin[axis]) / direction[axis]
            t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
        if t0 <= t1 and t1 > 0 and max(t0, 0.0) < best_t:
            best_t, best_id = max(t0, 0.0), o.id
    table_t = -origin[2] / direction[2] if direction[2] < 0 else MAX_DEPTH
    if best_t < table_t:
        return best_t, best_id
    return min(table_t, MAX_DEPTH), 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_render_matches_brute_force_ray_casting(seed):
    scene = generate_scene(12, seed, SceneConfig())
    cam = scene.camera
    result = render(scene, cam)
    dirs = pixel_rays(cam.position, cam.look_at, cam.focal_px, cam.width, cam.height)
    origin = np.asarray(cam.position)
    rng = np.random.default_rng(seed)
    for p in rng.choice(dirs.shape[0], size=300, replace=False):
        depth, oid = brute_force_pixel(origin, dirs[p], scene)
        r, c = divmod(int(p), cam.width)
        assert result.instance[r, c] == oid
        assert result.depth[r, c] == pytest.approx(depth, abs=1e-9)


def test_ray_parameter_is_z_depth():
    pos, look = (0.1, -0.4, 0.5), (0.0, 0.0, 0.0)
    dirs = pixel_rays(pos, look, 50.0, 16, 12)
    _, _, forward = camera_frame(pos, look)
    np.testing.assert_allclose(dirs @ forward, 1.0)


def test_projection_inverts_pixel_rays():
    pos, look = (0.0, -0.45, 0.45), (0.0, 0.0, 0.0)
    dirs = pixel_rays(pos, look, 55.0, 64, 64)
    points = np.asarray(pos) + 0.7 * dirs
    row, col, z, inside = project_points(points, pos, look, 55.0, 64, 64)
    assert inside.all()
    np.testing.assert_allclose(z, 0.7)
    np.testing.assert_array_equal(row * 64 + col, np.arange(64 * 64))


def test_empty_table_is_all_background(make_scene, top_camera):
    # the only box sits far outside a narrow top-down view
    cam = top_camera(height=0.5, size=16, focal=200.0)
    scene = make_scene([((0.2, 0.2, 0.24, 0.24), 0.05)], camera=cam)
    result = render(scene, cam)
    assert (result.instance == 0).all()
    np.testing.assert_allclose(result.depth, 0.5, atol=1e-3)


def test_box_top_depth_under_top_down_camera(make_scene, top_camera):
    cam = top_camera(height=1.0, size=32)
    scene = make_scene([((-0.05, -0.05, 0.05, 0.05), 0.12)], camera=cam)
    result = render(scene, cam)
    assert result.instance[16, 16] == 1
    assert result.depth[16, 16] == pytest.approx(0.88, abs=1e-3)
    assert result.instance[0, 0] == 0


def test_projection_counts_ignore_occlusion(make_scene):
    # a tall box directly in front of a short one, both inside the default view
    scene = make_scene([((-0.03, 0.05, 0.03, 0.1), 0.03), ((-0.06, -0.05, 0.06, -0.03), 0.3)])
    hits = cast_rays(scene, scene.camera)
    projected = projection_counts(hits)
    visible = visible_counts(render_from_hits(hits))
    assert projected[1] > 0
    assert visible.get(1, 0) < projected[1]
    assert visible[2] == projected[2]
