"""Differentiable building generator: axis-aligned box with floors, windows, roof.

Window openings are real holes in the walls (the pane quads carry the
transparent "window" label), so window count and size show up in silhouette
masks. All vertex coordinates are affine in the continuous parameters;
discrete parameters (floor count, windows per wall, roof type) only select
topology and have zero Jacobian columns.

LOD tiers: 0 box + roof, 1 per-floor wall bands, 2 walls with window and
door openings, 3 adds window frames and sills.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import DualScalar, Jacobian, seed
from ..mesh import TriangleMesh
from ..params import ParameterVector, ParamKind, ParamSpec
from .common import MeshBuilder

LOD_TIERS = (0, 1, 2, 3)

PARAM_SPECS = (
    ParamSpec("width", ParamKind.CONTINUOUS, 0.6, 3.0, description="footprint along x"),
    ParamSpec("depth", ParamKind.CONTINUOUS, 0.6, 3.0, description="footprint along z"),
    ParamSpec("floor_height", ParamKind.CONTINUOUS, 0.25, 0.8),
    ParamSpec("floors", ParamKind.DISCRETE, 1, 12, 1),
    ParamSpec("windows", ParamKind.DISCRETE, 0, 8, 1,
              description="windows per wall per floor"),
    # lower bounds exclude degenerate sliver windows; zero windows is the
    # discrete count's job
    ParamSpec("window_width", ParamKind.CONTINUOUS, 0.3, 0.9,
              description="window width as a fraction of its grid cell"),
    ParamSpec("window_height", ParamKind.CONTINUOUS, 0.3, 0.9,
              description="window height as a fraction of the floor height"),
    ParamSpec("roof_type", ParamKind.DISCRETE, 0, 1, 1,
              description="0 flat, 1 gabled"),
    ParamSpec("roof_height", ParamKind.CONTINUOUS, 0.05, 0.8),
    ParamSpec("door_width", ParamKind.CONTINUOUS, 0.05, 0.3,
              description="door width as a fraction of the front wall"),
    ParamSpec("door_height", ParamKind.CONTINUOUS, 0.3, 0.95,
              description="door height as a fraction of the floor height"),
)

PANE_INSET = 0.03
PROUD = 0.012  # outset for door/frame panels


def _validate(P: ParameterVector):
    names = tuple(s.name for s in P.spec)
    expected = tuple(s.name for s in PARAM_SPECS)
    if names != expected:
        raise ValueError(f"building: parameter names {names} do not match spec {expected}")


class _Wall:
    """Maps wall-local (u, y, outward offset) to world dual coordinates."""

    def __init__(self, axis: str, sign: float, width, depth):
        # u runs along the wall, y is up, off is along the outward normal
        self.axis = axis
        self.sign = sign
        self.width = width
        self.depth = depth
        self.span = width if axis == "z" else depth
        self.normal = (0.0, 0.0, sign) if axis == "z" else (sign, 0.0, 0.0)

    def world(self, u, y, off=0.0):
        if self.axis == "z":  # front (+z) / back (-z)
            x = u - self.width * 0.5
            if self.sign < 0:
                x = -1.0 * x
            z = self.depth * (0.5 * self.sign) + self.sign * off
            return (x, y, z)
        z = u - self.depth * 0.5
        if self.sign < 0:
            z = -1.0 * z
        x = self.width * (0.5 * self.sign) + self.sign * off
        return (x, y, z)

    def quad(self, builder, u0, u1, y0, y1, label, off=0.0, span_v=None):
        span = _val(self.span)
        vmax = span_v if span_v is not None else span
        uv = [(_val(u0) / span, _val(y0) / vmax), (_val(u1) / span, _val(y0) / vmax),
              (_val(u1) / span, _val(y1) / vmax), (_val(u0) / span, _val(y1) / vmax)]
        uv = [(min(max(a, 0.0), 1.0), min(max(b, 0.0), 1.0)) for a, b in uv]
        corners = [self.world(u0, y0, off), self.world(u1, y0, off),
                   self.world(u1, y1, off), self.world(u0, y1, off)]
        builder.add_quad(corners, self.normal, label, uvs=uv)


def _val(x) -> float:
    return x.value if isinstance(x, DualScalar) else float(x)


def generate_building(P: ParameterVector, lod: int, with_jacobian: bool = True
                      ) -> tuple[TriangleMesh, Jacobian | None]:
    """Build the building mesh and position Jacobian at the given LOD tier."""
    _validate(P)
    if lod not in LOD_TIERS:
        raise ValueError(f"building: lod tier {lod} not in {LOD_TIERS}")

    duals = seed(P)
    if not with_jacobian:
        duals = [DualScalar(d.value, np.zeros(0)) for d in duals]
    (width, depth, floor_h, _floors, _windows, win_w, win_h,
     _roof_type, roof_h, door_w, door_h) = duals
    floors = int(round(P["floors"]))
    windows = int(round(P["windows"]))
    gabled = P["roof_type"] >= 0.5

    n_par = len(duals[0].partials)
    b = MeshBuilder(n_par)
    total_h = floor_h * floors

    walls = [
        _Wall("z", 1.0, width, depth),   # front
        _Wall("z", -1.0, width, depth),  # back
        _Wall("x", 1.0, width, depth),   # right
        _Wall("x", -1.0, width, depth),  # left
    ]
    th = _val(total_h)

    for wi, wall in enumerate(walls):
        if lod == 0:
            wall.quad(b, 0.0, wall.span, 0.0, total_h, "wall")
            continue
        for f in range(floors):
            y0 = floor_h * f
            y1 = floor_h * (f + 1)
            if lod < 2 or windows == 0:
                wall.quad(b, 0.0, wall.span, y0, y1, "wall", span_v=th)
                continue
            cell = wall.span * (1.0 / windows)
            margin_y = floor_h * ((1.0 - win_h) * 0.5)
            wy0 = y0 + margin_y
            wy1 = y1 - margin_y
            # bottom / top wall strips across the full floor band
            wall.quad(b, 0.0, wall.span, y0, wy0, "wall", span_v=th)
            wall.quad(b, 0.0, wall.span, wy1, y1, "wall", span_v=th)
            for c in range(windows):
                u_lo = cell * c
                u_hi = cell * (c + 1)
                margin_u = cell * ((1.0 - win_w) * 0.5)
                wu0 = u_lo + margin_u
                wu1 = u_hi - margin_u
                wall.quad(b, u_lo, wu0, wy0, wy1, "wall", span_v=th)
                wall.quad(b, wu1, u_hi, wy0, wy1, "wall", span_v=th)
                wall.quad(b, wu0, wu1, wy0, wy1, "window", off=-PANE_INSET, span_v=th)
                if lod >= 3:
                    _window_trim(b, wall, wu0, wu1, wy0, wy1, cell, floor_h, th)
        if lod >= 2 and wi == 0:
            _door(b, wall, width, floor_h, door_w, door_h, th)

    _floor_slab(b, width, depth)
    _roof(b, width, depth, total_h, roof_h, gabled)

    mesh, jac = b.build()
    return mesh, (jac if with_jacobian else None)


def _door(b, wall, width, floor_h, door_w, door_h, th):
    half = width * (door_w * 0.5)
    mid = wall.span * 0.5
    wall.quad(b, mid - half, mid + half, 0.0, floor_h * door_h, "door",
              off=PROUD, span_v=th)


def _window_trim(b, wall, wu0, wu1, wy0, wy1, cell, floor_h, th):
    """Tier-3 small details: four frame strips plus a sill ledge."""
    fw = floor_h * 0.05
    wall.quad(b, wu0 - fw, wu1 + fw, wy0 - fw, wy0, "frame", off=PROUD, span_v=th)
    wall.quad(b, wu0 - fw, wu1 + fw, wy1, wy1 + fw, "frame", off=PROUD, span_v=th)
    wall.quad(b, wu0 - fw, wu0, wy0, wy1, "frame", off=PROUD, span_v=th)
    wall.quad(b, wu1, wu1 + fw, wy0, wy1, "frame", off=PROUD, span_v=th)
    # horizontal sill sticking out below the window
    s0 = wall.world(wu0 - fw, wy0, 0.0)
    s1 = wall.world(wu1 + fw, wy0, 0.0)
    s2 = wall.world(wu1 + fw, wy0, 0.05)
    s3 = wall.world(wu0 - fw, wy0, 0.05)
    b.add_quad([s0, s1, s2, s3], (0.0, 1.0, 0.0), "frame")


def _floor_slab(b, width, depth):
    hw = width * 0.5
    hd = depth * 0.5
    b.add_quad(
        [(-1.0 * hw, 0.0, -1.0 * hd), (hw, 0.0, -1.0 * hd),
         (hw, 0.0, hd), (-1.0 * hw, 0.0, hd)],
        (0.0, -1.0, 0.0), "wall",
    )


def _roof(b, width, depth, total_h, roof_h, gabled: bool):
    hw = width * 0.5
    hd = depth * 0.5
    if not gabled:
        b.add_quad(
            [(-1.0 * hw, total_h, hd), (hw, total_h, hd),
             (hw, total_h, -1.0 * hd), (-1.0 * hw, total_h, -1.0 * hd)],
            (0.0, 1.0, 0.0), "roof",
        )
        return
    ridge_y = total_h + roof_h
    # slope normal is (0, half-depth, roof height), from values only
    ny = _val(hd)
    nz = _val(roof_h)
    nl = float(np.hypot(ny, nz))
    n_front = (0.0, ny / nl, nz / nl)
    n_back = (0.0, ny / nl, -nz / nl)
    b.add_quad(
        [(-1.0 * hw, total_h, hd), (hw, total_h, hd),
         (hw, ridge_y, 0.0), (-1.0 * hw, ridge_y, 0.0)],
        n_front, "roof",
    )
    b.add_quad(
        [(hw, total_h, -1.0 * hd), (-1.0 * hw, total_h, -1.0 * hd),
         (-1.0 * hw, ridge_y, 0.0), (hw, ridge_y, 0.0)],
        n_back, "roof",
    )
    b.add_triangle_corners(
        [(hw, total_h, hd), (hw, total_h, -1.0 * hd), (hw, ridge_y, 0.0)],
        (1.0, 0.0, 0.0), "wall",
    )
    b.add_triangle_corners(
        [(-1.0 * hw, total_h, -1.0 * hd), (-1.0 * hw, total_h, hd),
         (-1.0 * hw, ridge_y, 0.0)],
        (-1.0, 0.0, 0.0), "wall",
    )
