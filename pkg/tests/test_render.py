import math

import numpy as np
import pytest

from procrecon.render import (
    Camera,
    SilhouetteMask,
    load_mask,
    mse,
    project_points,
    project_with_jacobian,
    render_backward,
    render_silhouette,
    save_mask,
    silhouette_iou,
    uniform_viewpoints,
)

CAM = Camera(0.0, 0.0, 3.0, (0.0, 0.0, 0.0), 0.8, (64, 64))


def world_at_ndc(sx: float, sy: float, cam: Camera = CAM) -> tuple[float, float, float]:
    """World point on the z=0 plane projecting to the given NDC coords."""
    t = math.tan(cam.fov_y / 2)
    aspect = cam.width / cam.height
    # camera on +z looking -z: view depth of the z=0 plane equals distance
    return (sx * cam.distance * t * aspect, sy * cam.distance * t, 0.0)


def quad_tris(p0, p1, p2, p3):
    pos = np.array([p0, p1, p2, p3], dtype=np.float64).ravel()
    return pos, np.array([[0, 1, 2], [0, 2, 3]])


def test_camera_invariants():
    with pytest.raises(ValueError):
        Camera(0, 0, 0.0)
    with pytest.raises(ValueError):
        Camera(0, 0, 1.0, fov_y=4.0)
    with pytest.raises(ValueError):
        Camera(0, 1.6, 1.0)


def test_empty_mesh_renders_zero():
    m = render_silhouette(np.zeros(0), np.zeros((0, 3), dtype=int), CAM)
    assert m.coverage.shape == (64, 64)
    assert m.coverage.sum() == 0.0


def test_huge_triangle_covers_frame():
    pos = np.array([[-50, -50, 0], [50, -50, 0], [0, 80, 0]], dtype=float).ravel()
    m = render_silhouette(pos, [[0, 1, 2]], CAM)
    assert np.all(m.coverage == 1.0)


def test_mesh_behind_camera_is_empty():
    pos = np.array([[-1, -1, 10], [1, -1, 10], [0, 1, 10]], dtype=float).ravel()
    m = render_silhouette(pos, [[0, 1, 2]], CAM)
    assert m.coverage.sum() == 0.0


def test_left_half_square_analytic():
    # square spans NDC x in [-1, edge], full height; oracle counts subsamples
    edge_px = 32.6
    edge_ndc = edge_px / 32.0 - 1.0
    pos, tris = quad_tris(
        world_at_ndc(-1.5, -1.5), world_at_ndc(edge_ndc, -1.5),
        world_at_ndc(edge_ndc, 1.5), world_at_ndc(-1.5, 1.5),
    )
    m = render_silhouette(pos, tris, CAM)
    sub_centers = (np.arange(64 * 4) + 0.5) / 4.0
    covered = (sub_centers < edge_px).reshape(64, 4).mean(axis=1)
    expected = np.tile(covered, (64, 1))
    assert np.allclose(m.coverage, expected)


def test_mse_cases():
    ones = SilhouetteMask(np.ones((8, 8)))
    zeros = SilhouetteMask(np.zeros((8, 8)))
    assert mse(ones, ones)[0] == 0.0
    loss, d = mse(ones, zeros)
    assert loss == 1.0
    assert np.allclose(d, 2.0 / 64)
    half = np.zeros((8, 8))
    half[:4] = 1.0
    assert mse(SilhouetteMask(half), zeros)[0] == 0.5
    with pytest.raises(ValueError):
        mse(ones, SilhouetteMask(np.zeros((4, 4))))


def test_mse_symmetry_property():
    rng = np.random.default_rng(0)
    a = SilhouetteMask(rng.random((16, 16)))
    b = SilhouetteMask(rng.random((16, 16)))
    assert mse(a, b)[0] == pytest.approx(mse(b, a)[0])
    assert mse(a, b)[0] > 0


def test_iou_cases():
    a = np.zeros((8, 24))
    a[:, :16] = 1.0
    b = np.zeros((8, 24))
    b[:, 8:24] = 1.0
    ma, mb = SilhouetteMask(a), SilhouetteMask(b)
    assert silhouette_iou(ma, ma) == 1.0
    disjoint = SilhouetteMask(np.zeros((8, 24)))
    disjoint.coverage[:, 20:] = 1.0
    left = SilhouetteMask(np.zeros((8, 24)))
    left.coverage[:, :4] = 1.0
    assert silhouette_iou(left, disjoint) == 0.0
    # equal-size half-planes overlapping half of each: IoU = 1/3
    assert silhouette_iou(ma, mb) == pytest.approx(1.0 / 3.0)
    empty = SilhouetteMask(np.zeros((8, 24)))
    assert silhouette_iou(empty, empty) == 1.0


def test_uniform_viewpoints_conventions():
    cams = uniform_viewpoints(1, 3.0)
    assert cams[0].azimuth == 0.0 and cams[0].elevation == 0.0

    cams = uniform_viewpoints(64, 3.0)
    dirs = np.array([
        (math.cos(c.elevation) * math.sin(c.azimuth), math.sin(c.elevation),
         math.cos(c.elevation) * math.cos(c.azimuth))
        for c in cams
    ])
    dots = dirs @ dirs.T
    np.fill_diagonal(dots, -1.0)
    nearest = np.arccos(np.clip(dots.max(axis=1), -1, 1))
    ideal = math.sqrt(4.0 * math.pi / 64)  # equal-area spacing
    assert nearest.mean() >= 0.9 * ideal
    assert all(abs(c.elevation) <= math.radians(80) + 1e-9 for c in cams)


def test_viewpoints_look_at_target():
    target = (0.3, -0.2, 0.5)
    for cam in uniform_viewpoints(16, 4.0, target):
        px, py, z = project_points(np.array([target]), cam)
        assert abs(px[0] - cam.width / 2) < 1e-6
        assert abs(py[0] - cam.height / 2) < 1e-6
        assert z[0] == pytest.approx(4.0)


def test_projection_jacobian_vs_fd():
    cam = Camera(0.3, 0.25, 3.0, (0.1, 0.2, -0.1), 0.8, (128, 128))
    pts = np.array([[0.3, -0.4, 0.2], [0.5, 0.1, -0.3]])
    px, py, z, J = project_with_jacobian(pts, cam)
    px0, py0, _ = project_points(pts, cam)
    assert np.allclose(px, px0) and np.allclose(py, py0)

    eps = 1e-6
    for k in range(3):  # world position partials
        d = np.zeros(3)
        d[k] = eps
        p1 = project_points(pts + d, cam)
        p0 = project_points(pts - d, cam)
        assert np.allclose((p1[0] - p0[0]) / (2 * eps), J[:, 0, k], rtol=1e-4)
        assert np.allclose((p1[1] - p0[1]) / (2 * eps), J[:, 1, k], rtol=1e-4)
    for i, name in enumerate(["azimuth", "elevation", "distance", "fov_y"]):
        kw = {"azimuth": cam.azimuth, "elevation": cam.elevation,
              "distance": cam.distance, "fov_y": cam.fov_y}
        kw[name] += eps
        c1 = Camera(kw["azimuth"], kw["elevation"], kw["distance"], cam.target,
                    kw["fov_y"], cam.resolution)
        kw[name] -= 2 * eps
        c0 = Camera(kw["azimuth"], kw["elevation"], kw["distance"], cam.target,
                    kw["fov_y"], cam.resolution)
        p1 = project_points(pts, c1)
        p0 = project_points(pts, c0)
        assert np.allclose((p1[0] - p0[0]) / (2 * eps), J[:, 0, 3 + i], rtol=1e-4,
                           atol=1e-6)
        assert np.allclose((p1[1] - p0[1]) / (2 * eps), J[:, 1, 3 + i], rtol=1e-4,
                           atol=1e-6)


# ----------------------------------------------------------------------
# edge-sampling backward
# ----------------------------------------------------------------------

BCAM = Camera(0.0, 0.0, 3.0, (0.0, 0.0, 0.0), 0.8, (128, 128))


def smooth_field():
    yy, xx = np.mgrid[0:128, 0:128]
    return np.sin(xx / 17.0) * np.cos(yy / 23.0) + 0.3


def test_backward_zero_field():
    pos = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.05, 0.6, 0.0]]).ravel()
    g = render_backward(pos, [[0, 1, 2]], BCAM, np.zeros((128, 128)))
    assert np.all(g.d_pos == 0.0)
    assert np.all(g.d_camera == 0.0)


def test_backward_dimension_mismatch():
    pos = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.05, 0.6, 0.0]]).ravel()
    with pytest.raises(ValueError):
        render_backward(pos, [[0, 1, 2]], BCAM, np.zeros((64, 64)))


def test_single_triangle_translation_fd():
    # directional derivative for a +x translation, epsilon = 1e-3 in NDC
    pos = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.05, 0.6, 0.0]]).ravel()
    tris = np.array([[0, 1, 2]])
    d_pix = smooth_field()

    def total(p):
        return float(np.sum(render_silhouette(p, tris, BCAM).coverage * d_pix))

    g = render_backward(pos, tris, BCAM, d_pix, rng_seed=5)
    eps_world = 1e-3 * BCAM.distance * math.tan(BCAM.fov_y / 2)
    direction = np.zeros(9)
    direction[0::3] = 1.0
    fd = (total(pos + eps_world * direction) - total(pos - eps_world * direction)) / (
        2 * eps_world
    )
    ana = float(np.dot(g.d_pos, direction))
    assert abs(fd - ana) / abs(fd) < 0.05


def test_single_triangle_full_gradient():
    pos = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.05, 0.6, 0.0]]).ravel()
    tris = np.array([[0, 1, 2]])
    d_pix = smooth_field()

    def total(p):
        return float(np.sum(render_silhouette(p, tris, BCAM).coverage * d_pix))

    g = render_backward(pos, tris, BCAM, d_pix, rng_seed=7)
    fd = np.zeros(9)
    eps = 0.004  # big enough to average supersampling quantization
    for k in range(9):
        dp = pos.copy()
        dp[k] += eps
        dm = pos.copy()
        dm[k] -= eps
        fd[k] = (total(dp) - total(dm)) / (2 * eps)
    cosine = np.dot(fd, g.d_pos) / (np.linalg.norm(fd) * np.linalg.norm(g.d_pos))
    assert cosine > 0.99
    assert abs(np.linalg.norm(fd) - np.linalg.norm(g.d_pos)) / np.linalg.norm(fd) < 0.05


def test_interior_vertex_zero_gradient():
    # small triangle entirely inside the big one's silhouette gets no gradient
    big = [[-1.0, -1.0, 0.0], [1.2, -1.0, 0.0], [0.0, 1.3, 0.0]]
    small = [[-0.1, -0.1, 0.1], [0.15, -0.1, 0.1], [0.0, 0.12, 0.1]]
    pos = np.array(big + small).ravel()
    tris = np.array([[0, 1, 2], [3, 4, 5]])
    g = render_backward(pos, tris, BCAM, smooth_field(), rng_seed=3)
    assert np.all(g.d_pos[9:] == 0.0)
    assert np.any(g.d_pos[:9] != 0.0)


def test_backward_camera_fd():
    pos = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.05, 0.6, 0.0]]).ravel()
    tris = np.array([[0, 1, 2]])
    d_pix = smooth_field()
    g = render_backward(pos, tris, BCAM, d_pix, rng_seed=11)

    def total(cam):
        return float(np.sum(render_silhouette(pos, tris, cam).coverage * d_pix))

    for i, name in enumerate(["azimuth", "elevation", "distance", "fov_y"]):
        eps = 0.02
        kw = {"azimuth": BCAM.azimuth, "elevation": BCAM.elevation,
              "distance": BCAM.distance, "fov_y": BCAM.fov_y}
        kw[name] += eps
        c1 = Camera(kw["azimuth"], kw["elevation"], kw["distance"], BCAM.target,
                    kw["fov_y"], BCAM.resolution)
        kw[name] -= 2 * eps
        c0 = Camera(kw["azimuth"], kw["elevation"], kw["distance"], BCAM.target,
                    kw["fov_y"], BCAM.resolution)
        fd = (total(c1) - total(c0)) / (2 * eps)
        assert abs(fd - g.d_camera[i]) / max(abs(fd), 1.0) < 0.2, name


def test_determinism_per_seed():
    pos = np.array([[-0.6, -0.5, 0.0], [0.7, -0.4, 0.1], [0.05, 0.6, 0.0]]).ravel()
    tris = np.array([[0, 1, 2]])
    d_pix = smooth_field()
    g1 = render_backward(pos, tris, BCAM, d_pix, rng_seed=9)
    g2 = render_backward(pos, tris, BCAM, d_pix, rng_seed=9)
    assert np.array_equal(g1.d_pos, g2.d_pos)
    assert np.array_equal(g1.d_camera, g2.d_camera)


def test_coverage_in_unit_range_random_meshes():
    rng = np.random.default_rng(4)
    for _ in range(5):
        pos = rng.normal(0, 0.6, (12, 3)).ravel()
        tris = rng.integers(0, 12, (8, 3))
        m = render_silhouette(pos, tris, BCAM)
        assert m.coverage.min() >= 0.0 and m.coverage.max() <= 1.0


def test_mask_png_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    mask = SilhouetteMask(rng.random((32, 32)))
    path = tmp_path / "m.png"
    save_mask(mask, path)
    back = load_mask(path)
    assert back.coverage.shape == (32, 32)
    assert np.max(np.abs(back.coverage - mask.coverage)) <= 0.5 / 255 + 1e-9
