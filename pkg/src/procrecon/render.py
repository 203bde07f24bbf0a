"""Silhouette rasterizer with edge-sampling gradients, cameras, viewpoint sets.

Forward pass: hard 4x4 supersampled coverage, no depth buffer (the union of
projected triangles is exactly the silhouette of an opaque object).
Backward pass: gradients exist only at silhouette boundaries, so they are
estimated by stratified Monte Carlo sampling along candidate silhouette
edges and chained through the projection to vertex positions and the four
orbit-camera parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image

SUPERSAMPLE = 4  # subsamples per pixel axis; coverage = covered/16
Z_NEAR = 1e-6
EDGE_SAMPLES_PER_PIXEL = 4.0
PROBE_OFFSET_PX = 0.5
WELD_QUANTUM = 1e-6  # position quantum for identifying duplicated seam vertices


@dataclass(frozen=True)
class Camera:
    """Orbit camera: spherical position around a fixed look-at target."""

    azimuth: float
    elevation: float
    distance: float
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov_y: float = 0.8
    resolution: tuple[int, int] = (256, 256)

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("camera distance must be positive")
        if not 0 < self.fov_y < math.pi:
            raise ValueError("fov_y must lie in (0, pi)")
        if not -math.pi / 2 < self.elevation < math.pi / 2:
            raise ValueError("elevation must lie in (-pi/2, pi/2)")

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    def with_resolution(self, width: int, height: int) -> "Camera":
        return Camera(self.azimuth, self.elevation, self.distance, self.target,
                      self.fov_y, (width, height))

    def eye(self) -> np.ndarray:
        d = _orbit_direction(self.azimuth, self.elevation)
        return np.asarray(self.target) + self.distance * d


@dataclass
class SilhouetteMask:
    """Per-pixel coverage in [0, 1]."""

    coverage: np.ndarray  # (H, W) float64

    def __post_init__(self):
        self.coverage = np.asarray(self.coverage, dtype=np.float64)
        if self.coverage.ndim != 2:
            raise ValueError("coverage must be a 2D array")

    @property
    def width(self) -> int:
        return self.coverage.shape[1]

    @property
    def height(self) -> int:
        return self.coverage.shape[0]

    def binary(self, threshold: float = 0.5) -> np.ndarray:
        return self.coverage >= threshold

    def downsampled(self, factor: int) -> "SilhouetteMask":
        """Block-mean downsample by an integer factor (coverage stays coverage)."""
        h, w = self.coverage.shape
        if h % factor or w % factor:
            raise ValueError(f"resolution {w}x{h} not divisible by {factor}")
        c = self.coverage.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
        return SilhouetteMask(c)


@dataclass
class RenderGradients:
    d_pos: np.ndarray  # flat, 3 per vertex
    d_camera: np.ndarray  # (azimuth, elevation, distance, fov_y)


# ----------------------------------------------------------------------
# projection
# ----------------------------------------------------------------------

def _orbit_direction(azimuth: float, elevation: float) -> np.ndarray:
    ce, se = math.cos(elevation), math.sin(elevation)
    sa, ca = math.sin(azimuth), math.cos(azimuth)
    return np.array([ce * sa, se, ce * ca])


def camera_basis(cam: Camera) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(eye, right, up, forward) of the orbit camera; forward points at the target."""
    a, e = cam.azimuth, cam.elevation
    ce, se = math.cos(e), math.sin(e)
    sa, ca = math.sin(a), math.cos(a)
    d = np.array([ce * sa, se, ce * ca])
    eye = np.asarray(cam.target, dtype=np.float64) + cam.distance * d
    right = np.array([ca, 0.0, -sa])
    up = np.array([-se * sa, ce, -se * ca])
    forward = -d
    return eye, right, up, forward


def project_points(points: np.ndarray, cam: Camera) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points to pixel coordinates.

    Returns (px, py, z_view); z_view > 0 means in front of the camera.
    Pixel origin is the top-left image corner, +y down.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    eye, right, up, forward = camera_basis(cam)
    w = pts - eye
    xv = w @ right
    yv = w @ up
    zv = w @ forward
    t = math.tan(cam.fov_y / 2.0)
    aspect = cam.width / cam.height
    z_safe = np.where(zv > Z_NEAR, zv, 1.0)
    sx = xv / (z_safe * t * aspect)
    sy = yv / (z_safe * t)
    px = (sx + 1.0) * 0.5 * cam.width
    py = (1.0 - sy) * 0.5 * cam.height
    return px, py, zv


def project_with_jacobian(points: np.ndarray, cam: Camera):
    """Project points and return d(px,py)/d(x,y,z,azimuth,elevation,distance,fov).

    Returns (px, py, z_view, J) with J of shape (n, 2, 7). Used by the
    edge-sampling backward pass to chain pixel-space gradients to vertex
    positions and camera parameters.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    a, e, dist = cam.azimuth, cam.elevation, cam.distance
    ce, se = math.cos(e), math.sin(e)
    sa, ca = math.sin(a), math.cos(a)

    d = np.array([ce * sa, se, ce * ca])
    dd_da = np.array([ce * ca, 0.0, -ce * sa])
    dd_de = np.array([-se * sa, ce, -se * ca])

    right = np.array([ca, 0.0, -sa])
    dr_da = np.array([-sa, 0.0, -ca])
    up = np.array([-se * sa, ce, -se * ca])
    du_da = np.array([-se * ca, 0.0, se * sa])
    du_de = np.array([-ce * sa, -se, -ce * ca])
    fwd = -d

    eye = np.asarray(cam.target, dtype=np.float64) + dist * d
    w = pts - eye  # (n, 3)

    xv = w @ right
    yv = w @ up
    zv = w @ fwd

    # d(w)/d(cam): -d(eye)/d(cam)
    dw_da = -dist * dd_da
    dw_de = -dist * dd_de
    dw_dd = -d

    dxv = np.empty((n, 7))
    dyv = np.empty((n, 7))
    dzv = np.empty((n, 7))
    dxv[:, 0:3] = right
    dyv[:, 0:3] = up
    dzv[:, 0:3] = fwd
    dxv[:, 3] = w @ dr_da + right @ dw_da
    dyv[:, 3] = w @ du_da + up @ dw_da
    dzv[:, 3] = w @ (-dd_da) + fwd @ dw_da
    dxv[:, 4] = right @ dw_de
    dyv[:, 4] = w @ du_de + up @ dw_de
    dzv[:, 4] = w @ (-dd_de) + fwd @ dw_de
    dxv[:, 5] = right @ dw_dd
    dyv[:, 5] = up @ dw_dd
    dzv[:, 5] = fwd @ dw_dd
    dxv[:, 6] = 0.0
    dyv[:, 6] = 0.0
    dzv[:, 6] = 0.0

    t = math.tan(cam.fov_y / 2.0)
    dt_df = 0.5 * (1.0 + t * t)
    aspect = cam.width / cam.height
    z_safe = np.where(zv > Z_NEAR, zv, 1.0)

    inv_z = 1.0 / z_safe
    sx = xv * inv_z / (t * aspect)
    sy = yv * inv_z / t

    # quotient rule for sx = xv / (zv * t * aspect), sy = yv / (zv * t)
    dsx = (dxv * z_safe[:, None] - xv[:, None] * dzv) * (inv_z**2 / (t * aspect))[:, None]
    dsy = (dyv * z_safe[:, None] - yv[:, None] * dzv) * (inv_z**2 / t)[:, None]
    dsx[:, 6] = -sx / t * dt_df
    dsy[:, 6] = -sy / t * dt_df

    px = (sx + 1.0) * 0.5 * cam.width
    py = (1.0 - sy) * 0.5 * cam.height
    J = np.empty((n, 2, 7))
    J[:, 0, :] = dsx * (0.5 * cam.width)
    J[:, 1, :] = dsy * (-0.5 * cam.height)
    return px, py, zv, J


# ----------------------------------------------------------------------
# forward rasterization
# ----------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _rasterize_kernel(px, py, zv, tris, buf, ss):  # pragma: no cover - jit
    h4, w4 = buf.shape
    inv_ss = 1.0 / ss
    for t in range(tris.shape[0]):
        ia, ib, ic = tris[t, 0], tris[t, 1], tris[t, 2]
        if zv[ia] <= Z_NEAR or zv[ib] <= Z_NEAR or zv[ic] <= Z_NEAR:
            continue
        ax, ay = px[ia], py[ia]
        bx, by = px[ib], py[ib]
        cx, cy = px[ic], py[ic]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        s = 1.0 if area > 0.0 else -1.0
        xmin = min(ax, min(bx, cx))
        xmax = max(ax, max(bx, cx))
        ymin = min(ay, min(by, cy))
        ymax = max(ay, max(by, cy))
        ix0 = max(0, int(math.floor(xmin * ss)))
        ix1 = min(w4, int(math.ceil(xmax * ss)) + 1)
        iy0 = max(0, int(math.floor(ymin * ss)))
        iy1 = min(h4, int(math.ceil(ymax * ss)) + 1)
        for iy in range(iy0, iy1):
            syc = (iy + 0.5) * inv_ss
            for ix in range(ix0, ix1):
                if buf[iy, ix]:
                    continue
                sxc = (ix + 0.5) * inv_ss
                w0 = s * ((bx - ax) * (syc - ay) - (by - ay) * (sxc - ax))
                if w0 < 0.0:
                    continue
                w1 = s * ((cx - bx) * (syc - by) - (cy - by) * (sxc - bx))
                if w1 < 0.0:
                    continue
                w2 = s * ((ax - cx) * (syc - cy) - (ay - cy) * (sxc - cx))
                if w2 >= 0.0:
                    buf[iy, ix] = 1


def _subsample_buffer(positions, indices, cam: Camera) -> np.ndarray:
    px, py, zv = project_points(positions, cam)
    buf = np.zeros((cam.height * SUPERSAMPLE, cam.width * SUPERSAMPLE), dtype=np.uint8)
    tris = np.ascontiguousarray(np.asarray(indices, dtype=np.int64).reshape(-1, 3))
    if len(tris):
        _rasterize_kernel(px, py, zv, tris, buf, float(SUPERSAMPLE))
    return buf


def render_silhouette(positions, indices, cam: Camera) -> SilhouetteMask:
    """Rasterize coverage of the triangle union; depth is ignored."""
    buf = _subsample_buffer(positions, indices, cam)
    h, w = cam.height, cam.width
    cov = buf.reshape(h, SUPERSAMPLE, w, SUPERSAMPLE).mean(axis=(1, 3))
    return SilhouetteMask(cov)


# ----------------------------------------------------------------------
# edge-sampling backward
# ----------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _edge_sample_kernel(ax, ay, bx, by, n_samples, offsets, u, buf, d_pixels,
                        eps, ss, grad_a, grad_b):  # pragma: no cover - jit
    h4, w4 = buf.shape
    h, w = d_pixels.shape
    for e in range(ax.shape[0]):
        dx = bx[e] - ax[e]
        dy = by[e] - ay[e]
        length = math.sqrt(dx * dx + dy * dy)
        if length < 1e-12:
            continue
        nx = -dy / length
        ny = dx / length
        ns = n_samples[e]
        base = offsets[e]
        w_len = length / ns
        for k in range(ns):
            s = (k + u[base + k]) / ns
            x = ax[e] + s * dx
            y = ay[e] + s * dy
            pxi = int(math.floor(x))
            pyi = int(math.floor(y))
            if pxi < 0 or pxi >= w or pyi < 0 or pyi >= h:
                continue
            phi = d_pixels[pyi, pxi]
            if phi == 0.0:
                continue
            qx = x + eps * nx
            qy = y + eps * ny
            rx = x - eps * nx
            ry = y - eps * ny
            iqx = int(math.floor(qx * ss))
            iqy = int(math.floor(qy * ss))
            irx = int(math.floor(rx * ss))
            iry = int(math.floor(ry * ss))
            cq = 0
            if 0 <= iqx < w4 and 0 <= iqy < h4:
                cq = buf[iqy, iqx]
            cr = 0
            if 0 <= irx < w4 and 0 <= iry < h4:
                cr = buf[iry, irx]
            if cq == cr:
                continue
            if cq:
                ox = -nx
                oy = -ny
            else:
                ox = nx
                oy = ny
            weight = phi * w_len
            grad_a[e, 0] += weight * (1.0 - s) * ox
            grad_a[e, 1] += weight * (1.0 - s) * oy
            grad_b[e, 0] += weight * s * ox
            grad_b[e, 1] += weight * s * oy


def _candidate_edges(positions, indices, px, py, zv):
    """Unique geometric edges adjacent to fewer than 2 front-facing triangles.

    Seam-duplicated vertices are welded by quantized position so shared
    edges are counted once; each unique edge keeps one representative
    vertex index pair for the gradient chain.
    """
    verts = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    if len(tris) == 0:
        return np.zeros((0, 2), dtype=np.int64)

    q = np.round(verts / WELD_QUANTUM).astype(np.int64)
    _, gid = np.unique(q, axis=0, return_inverse=True)

    valid = (zv[tris[:, 0]] > Z_NEAR) & (zv[tris[:, 1]] > Z_NEAR) & (zv[tris[:, 2]] > Z_NEAR)
    tris = tris[valid]
    if len(tris) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    area = (px[tris[:, 1]] - px[tris[:, 0]]) * (py[tris[:, 2]] - py[tris[:, 0]]) - (
        py[tris[:, 1]] - py[tris[:, 0]]
    ) * (px[tris[:, 2]] - px[tris[:, 0]])
    front = area > 0.0

    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    efront = np.concatenate([front, front, front])
    keys = np.sort(gid[edges], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    front_count = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(front_count, inverse, efront.astype(np.int64))
    rep = np.zeros(len(uniq), dtype=np.int64)
    rep[inverse] = np.arange(len(edges))
    candidates = front_count < 2
    return edges[rep[candidates]]


def render_backward(positions, indices, cam: Camera, d_pixels: np.ndarray,
                    rng_seed: int = 0) -> RenderGradients:
    """Edge-sampling gradients of sum(d_pixels * coverage) w.r.t. geometry and camera.

    Only silhouette boundaries move coverage, so interior vertices receive
    exactly zero gradient. The sample budget is EDGE_SAMPLES_PER_PIXEL per
    projected pixel of edge length; the stratified offsets come from
    ``rng_seed``, making every call reproducible.
    """
    positions = np.asarray(positions, dtype=np.float64).ravel()
    d_pixels = np.asarray(d_pixels, dtype=np.float64)
    if d_pixels.shape != (cam.height, cam.width):
        raise ValueError(
            f"d_pixels shape {d_pixels.shape} does not match camera {cam.resolution}"
        )
    n_verts = len(positions) // 3
    grads = RenderGradients(np.zeros(3 * n_verts), np.zeros(4))

    px, py, zv = project_points(positions, cam)
    edge_pairs = _candidate_edges(positions, indices, px, py, zv)
    # cull edges with an endpoint behind the near plane
    if len(edge_pairs):
        ok = (zv[edge_pairs[:, 0]] > Z_NEAR) & (zv[edge_pairs[:, 1]] > Z_NEAR)
        edge_pairs = edge_pairs[ok]
    if len(edge_pairs) == 0 or not np.any(d_pixels):
        return grads

    ax, ay = px[edge_pairs[:, 0]], py[edge_pairs[:, 0]]
    bx, by = px[edge_pairs[:, 1]], py[edge_pairs[:, 1]]
    lengths = np.hypot(bx - ax, by - ay)
    n_samples = np.clip(np.ceil(EDGE_SAMPLES_PER_PIXEL * lengths), 1, 4096).astype(np.int64)
    offsets = np.zeros(len(n_samples) + 1, dtype=np.int64)
    np.cumsum(n_samples, out=offsets[1:])
    rng = np.random.default_rng(rng_seed)
    u = rng.random(int(offsets[-1]))

    buf = _subsample_buffer(positions, indices, cam)
    grad_a = np.zeros((len(edge_pairs), 2))
    grad_b = np.zeros((len(edge_pairs), 2))
    _edge_sample_kernel(ax, ay, bx, by, n_samples, offsets[:-1], u, buf,
                        d_pixels, PROBE_OFFSET_PX, float(SUPERSAMPLE),
                        grad_a, grad_b)

    # chain pixel-space endpoint gradients through the projection
    endpoint_ids = np.unique(edge_pairs)
    _, _, _, J = project_with_jacobian(positions.reshape(-1, 3)[endpoint_ids], cam)
    col = {v: i for i, v in enumerate(endpoint_ids)}
    ja = J[[col[v] for v in edge_pairs[:, 0]]]  # (E, 2, 7)
    jb = J[[col[v] for v in edge_pairs[:, 1]]]
    full_a = np.einsum("eik,ei->ek", ja, grad_a)  # (E, 7)
    full_b = np.einsum("eik,ei->ek", jb, grad_b)

    d_pos3 = np.zeros((n_verts, 3))
    np.add.at(d_pos3, edge_pairs[:, 0], full_a[:, 0:3])
    np.add.at(d_pos3, edge_pairs[:, 1], full_b[:, 0:3])
    grads.d_pos = d_pos3.ravel()
    grads.d_camera = full_a[:, 3:7].sum(axis=0) + full_b[:, 3:7].sum(axis=0)
    return grads


# ----------------------------------------------------------------------
# losses over masks
# ----------------------------------------------------------------------

def mse(rendered: SilhouetteMask, reference: SilhouetteMask) -> tuple[float, np.ndarray]:
    """Mean squared error and its per-pixel gradient 2(I - M)/N."""
    if rendered.coverage.shape != reference.coverage.shape:
        raise ValueError(
            f"mask shapes differ: {rendered.coverage.shape} vs {reference.coverage.shape}"
        )
    diff = rendered.coverage - reference.coverage
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


def silhouette_iou(mask_a: SilhouetteMask, mask_b: SilhouetteMask,
                   threshold: float = 0.5) -> float:
    """Intersection over union of thresholded masks; 1.0 when both are empty."""
    if mask_a.coverage.shape != mask_b.coverage.shape:
        raise ValueError("mask shapes differ")
    a = mask_a.binary(threshold)
    b = mask_b.binary(threshold)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def uniform_viewpoints(n: int, distance: float, target=(0.0, 0.0, 0.0),
                       fov_y: float = 0.8, resolution: tuple[int, int] = (256, 256)
                       ) -> list[Camera]:
    """Fibonacci-sphere camera set; elevations clamped to +-80 degrees.

    By convention n=1 returns the +z axis view.
    """
    if n < 1:
        raise ValueError("need at least one viewpoint")
    target = tuple(float(x) for x in target)
    if n == 1:
        return [Camera(0.0, 0.0, distance, target, fov_y, resolution)]
    cams = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    limit = math.radians(80.0)
    for i in range(n):
        y = 1.0 - 2.0 * (i + 0.5) / n
        el = max(-limit, min(limit, math.asin(y)))
        r = math.cos(el)
        phi = i * golden
        az = math.atan2(r * math.sin(phi), r * math.cos(phi))
        cams.append(Camera(az, el, distance, target, fov_y, resolution))
    return cams


# ----------------------------------------------------------------------
# mask file I/O
# ----------------------------------------------------------------------

def save_mask(mask: SilhouetteMask, path: Path) -> None:
    """8-bit grayscale PNG, coverage scaled to 0..255."""
    img = Image.fromarray(np.round(mask.coverage * 255.0).astype(np.uint8), mode="L")
    img.save(Path(path))


def load_mask(path: Path) -> SilhouetteMask:
    img = Image.open(Path(path)).convert("L")
    return SilhouetteMask(np.asarray(img, dtype=np.float64) / 255.0)
