"""Shared construction machinery for the procedural generators."""

from __future__ import annotations

import numpy as np

from ..autodiff import DualArray, DualScalar, Jacobian, value_of
from ..mesh import TriangleMesh


def catmull_rom_basis(n_ctrl: int, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Uniform Catmull-Rom sampling weights with clamped ends.

    Returns (W, dW): curve(t) = W @ controls and d curve/dt = dW @ controls,
    so the curve is a fixed linear map of the control values at fixed ts.
    """
    ts = np.asarray(ts, dtype=np.float64)
    W = np.zeros((len(ts), n_ctrl))
    dW = np.zeros((len(ts), n_ctrl))
    span = n_ctrl - 1
    x = ts * span
    for row, xr in enumerate(x):
        seg = min(int(xr), n_ctrl - 2)
        u = xr - seg
        i0, i1, i2, i3 = max(seg - 1, 0), seg, seg + 1, min(seg + 2, n_ctrl - 1)
        u2, u3 = u * u, u * u * u
        W[row, i0] += 0.5 * (-u + 2 * u2 - u3)
        W[row, i1] += 0.5 * (2 - 5 * u2 + 3 * u3)
        W[row, i2] += 0.5 * (u + 4 * u2 - 3 * u3)
        W[row, i3] += 0.5 * (-u2 + u3)
        dW[row, i0] += 0.5 * (-1 + 4 * u - 3 * u2) * span
        dW[row, i1] += 0.5 * (-10 * u + 9 * u2) * span
        dW[row, i2] += 0.5 * (1 + 8 * u - 9 * u2) * span
        dW[row, i3] += 0.5 * (-2 * u + 3 * u2) * span
    return W, dW


def _partials_of(c, width: int) -> np.ndarray:
    if isinstance(c, DualScalar):
        return c.partials
    return np.zeros(width)


class MeshBuilder:
    """Accumulates dual-valued vertices and labeled triangles.

    Vertex coordinates may be DualScalar, DualArray grids or plain floats;
    build() returns the mesh plus the dense position Jacobian.
    """

    def __init__(self, n_params: int):
        self.n_params = n_params
        self._pos: list[np.ndarray] = []  # chunks (k, 3)
        self._par: list[np.ndarray] = []  # chunks (k, 3, P)
        self._nrm: list[np.ndarray] = []
        self._uv: list[np.ndarray] = []
        self._tris: list[np.ndarray] = []
        self._labels: list[str] = []
        self._vcount = 0
        # scalar vertex/triangle buffers in plain lists, flushed lazily
        self._sv: list[tuple] = []
        self._sp: list[tuple] = []
        self._sn: list[tuple] = []
        self._suv: list[tuple] = []
        self._stris: list[tuple] = []

    def _flush_scalars(self) -> None:
        if self._stris:
            self._tris.append(np.asarray(self._stris, dtype=np.int32))
            self._stris = []
        if not self._sv:
            return
        self._pos.append(np.asarray(self._sv, dtype=np.float64))
        par = np.array(self._sp, dtype=np.float64)
        self._par.append(par.reshape(len(self._sv), 3, self.n_params))
        self._nrm.append(np.asarray(self._sn, dtype=np.float64))
        self._uv.append(np.asarray(self._suv, dtype=np.float64))
        self._sv, self._sp, self._sn, self._suv = [], [], [], []

    def add_vertex(self, x, y, z, normal, uv) -> int:
        self._sv.append((value_of(x), value_of(y), value_of(z)))
        self._sp.append(
            (_partials_of(x, self.n_params), _partials_of(y, self.n_params),
             _partials_of(z, self.n_params))
        )
        self._sn.append(tuple(normal))
        self._suv.append(tuple(uv))
        self._vcount += 1
        return self._vcount - 1

    def add_triangle(self, a: int, b: int, c: int, label: str) -> None:
        self._stris.append((a, b, c))
        self._labels.append(label)

    def add_quad(self, corners, normal, label: str, uvs=None) -> None:
        """Four (x, y, z) corners in ring order; emits two triangles."""
        if uvs is None:
            uvs = [(0, 0), (1, 0), (1, 1), (0, 1)]
        ids = [self.add_vertex(*c, normal, uv) for c, uv in zip(corners, uvs)]
        self.add_triangle(ids[0], ids[1], ids[2], label)
        self.add_triangle(ids[0], ids[2], ids[3], label)

    def add_triangle_corners(self, corners, normal, label: str, uvs=None) -> None:
        if uvs is None:
            uvs = [(0, 0), (1, 0), (0.5, 1)]
        ids = [self.add_vertex(*c, normal, uv) for c, uv in zip(corners, uvs)]
        self.add_triangle(ids[0], ids[1], ids[2], label)

    def add_grid(self, X: DualArray, Y: DualArray, Z: DualArray,
                 normals: np.ndarray, us: np.ndarray, vs: np.ndarray,
                 label: str) -> None:
        """A (R, C) vertex lattice quad-meshed between consecutive rows/cols.

        normals: (R, C, 3); us: (C,) texture u per column; vs: (R,) texture v
        per row. Degenerate quads (coincident corners) are allowed; the
        rasterizer skips their zero-area triangles.
        """
        self._flush_scalars()
        rows, cols = X.shape
        base = self._vcount
        pos = np.stack([X.v, Y.v, Z.v], axis=-1).reshape(rows * cols, 3)
        par = np.stack([X.p, Y.p, Z.p], axis=-2).reshape(rows * cols, 3, self.n_params)
        self._pos.append(pos)
        self._par.append(par)
        self._nrm.append(np.asarray(normals, dtype=np.float64).reshape(-1, 3))
        uv = np.empty((rows, cols, 2))
        uv[..., 0] = np.asarray(us)[None, :]
        uv[..., 1] = np.asarray(vs)[:, None]
        self._uv.append(uv.reshape(-1, 2))
        self._vcount += rows * cols

        idx = base + np.arange(rows * cols).reshape(rows, cols)
        a = idx[:-1, :-1].ravel()
        b = idx[:-1, 1:].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[1:, :-1].ravel()
        t1 = np.stack([a, b, c], axis=1)
        t2 = np.stack([a, c, d], axis=1)
        # interleave so both halves of each quad stay adjacent
        tris = np.stack([t1, t2], axis=1).reshape(-1, 3).astype(np.int32)
        self._tris.append(tris)
        self._labels.extend([label] * len(tris))

    def build(self) -> tuple[TriangleMesh, Jacobian]:
        self._flush_scalars()
        positions = (np.concatenate(self._pos) if self._pos else np.zeros((0, 3))).ravel()
        partials = (
            np.concatenate(self._par) if self._par else np.zeros((0, 3, self.n_params))
        ).reshape(3 * self._vcount, self.n_params)
        normals = (np.concatenate(self._nrm) if self._nrm else np.zeros((0, 3))).ravel()
        uvs = (np.concatenate(self._uv) if self._uv else np.zeros((0, 2))).ravel()
        tris = (
            np.concatenate(self._tris) if self._tris else np.zeros((0, 3), dtype=np.int32)
        )
        mesh = TriangleMesh(positions, normals, uvs, tris, self._labels)
        return mesh, Jacobian(partials)


def polyline_normals_2d(points: np.ndarray) -> np.ndarray:
    """Outward unit normals for an open 2D polyline, averaged at interior vertices.

    Segment normal convention: (dy, -dx) of the segment direction.
    """
    pts = np.asarray(points, dtype=np.float64)
    d = pts[1:] - pts[:-1]
    lens = np.hypot(d[:, 0], d[:, 1])
    lens[lens < 1e-12] = 1.0
    seg_n = np.stack([d[:, 1] / lens, -d[:, 0] / lens], axis=1)
    vert_n = np.zeros_like(pts)
    vert_n[:-1] += seg_n
    vert_n[1:] += seg_n
    norms = np.hypot(vert_n[:, 0], vert_n[:, 1])
    norms[norms < 1e-12] = 1.0
    return vert_n / norms[:, None]
