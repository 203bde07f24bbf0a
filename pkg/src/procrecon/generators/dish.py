"""Differentiable dish generator: lathe body from a spline profile, optional handle.

Construction: (1) Catmull-Rom interpolate the radial offset controls into a
radius-vs-height profile, (2) offset inward by the wall thickness and close
into a ring cross-section, (3) revolve around +Y, (4) optionally sweep a
tube along an offset-controlled arc for the handle.

All nonlinear profile math runs on dual arrays, so the position Jacobian
w.r.t. the continuous parameters is exact; the handle flag is discrete and
its Jacobian column stays zero.
"""

from __future__ import annotations

import math

import numpy as np

from ..autodiff import (
    DualArray,
    Jacobian,
    da_concat,
    da_lincomb,
    da_outer,
    seed_array,
)
from ..mesh import TriangleMesh
from ..params import ParameterVector, ParamKind, ParamSpec
from .common import MeshBuilder, catmull_rom_basis, polyline_normals_2d

N_PROFILE_CONTROLS = 8

# tier -> (profile spline samples, lathe segments)
LOD_TIERS = {0: (8, 16), 1: (16, 32), 2: (32, 64), 3: (64, 128)}

PARAM_SPECS = tuple(
    [
        ParamSpec(f"radius_{k}", ParamKind.CONTINUOUS, 0.05, 1.5,
                  description=f"profile radius control {k} (bottom to top)")
        for k in range(N_PROFILE_CONTROLS)
    ]
    + [
        ParamSpec("thickness", ParamKind.CONTINUOUS, 0.005, 0.1,
                  description="wall thickness, perpendicular to the profile"),
        ParamSpec("height", ParamKind.CONTINUOUS, 0.3, 2.0,
                  description="overall body height"),
        ParamSpec("handle", ParamKind.DISCRETE, 0.0, 1.0, 1.0,
                  description="1 adds a swept handle on the +x side"),
        ParamSpec("handle_offset_0", ParamKind.CONTINUOUS, 0.05, 0.6,
                  description="handle arc control offset (top)"),
        ParamSpec("handle_offset_1", ParamKind.CONTINUOUS, 0.05, 0.6),
        ParamSpec("handle_offset_2", ParamKind.CONTINUOUS, 0.05, 0.6),
        ParamSpec("handle_offset_3", ParamKind.CONTINUOUS, 0.05, 0.6,
                  description="handle arc control offset (bottom)"),
    ]
)

HANDLE_T_TOP = 0.70
HANDLE_T_BOTTOM = 0.38


def _validate(P: ParameterVector):
    names = tuple(s.name for s in P.spec)
    expected = tuple(s.name for s in PARAM_SPECS)
    if names != expected:
        raise ValueError(f"dish: parameter names {names} do not match spec {expected}")


def generate_dish(P: ParameterVector, lod: int, with_jacobian: bool = True
                  ) -> tuple[TriangleMesh, Jacobian | None]:
    """Build the dish mesh and its position Jacobian at the given LOD tier."""
    _validate(P)
    if lod not in LOD_TIERS:
        raise ValueError(f"dish: lod tier {lod} not in {sorted(LOD_TIERS)}")
    samples, segments = LOD_TIERS[lod]

    duals = seed_array(P, with_jacobian)
    n_par = duals.n_params
    controls = duals[0:N_PROFILE_CONTROLS]
    thickness = duals[N_PROFILE_CONTROLS]
    height = duals[N_PROFILE_CONTROLS + 1]
    handle_on = P["handle"] >= 0.5

    builder = MeshBuilder(n_par)

    # outer profile r(t), y(t) and its perpendicular inward offset
    ts = np.linspace(0.0, 1.0, samples)
    W, dW = catmull_rom_basis(N_PROFILE_CONTROLS, ts)
    r = da_lincomb(W, controls)
    y = height * DualArray.constant(ts, n_par)
    dr = da_lincomb(dW, controls)  # d r / d t
    dy = height.broadcast_to(r.shape)  # d y / d t
    tlen = (dr * dr + dy * dy).sqrt()
    inner_r = r - thickness * (dy / tlen)
    inner_y = y + thickness * (dr / tlen)

    # closed cross-section cycle: axis bottom, outer up, inner down, axis top
    zero = DualArray.constant(np.zeros(1), n_par)
    cyc_r = da_concat([zero, r, inner_r[::-1], zero])
    cyc_y = da_concat([zero, y, inner_y[::-1], inner_y[0:1]])
    n2d = polyline_normals_2d(np.stack([cyc_r.v, cyc_y.v], axis=1))

    theta = np.linspace(0.0, 2.0 * math.pi, segments + 1)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    X = da_outer(cyc_r, cos_t)
    Y = cyc_y.expand().broadcast_to(X.shape)
    Z = da_outer(cyc_r, sin_t)
    normals = np.empty(X.shape + (3,))
    normals[..., 0] = n2d[:, 0:1] * cos_t[None, :]
    normals[..., 1] = n2d[:, 1:2]
    normals[..., 2] = n2d[:, 0:1] * sin_t[None, :]
    n_rows = X.shape[0]
    builder.add_grid(X, Y, Z, normals,
                     us=theta / (2.0 * math.pi),
                     vs=np.linspace(0.0, 1.0, n_rows),
                     label="body")

    if handle_on:
        _add_handle(builder, duals, controls, thickness, height, samples, segments)

    mesh, jac = builder.build()
    return mesh, (jac if with_jacobian else None)


def _add_handle(builder: MeshBuilder, duals: DualArray, controls: DualArray,
                thickness: DualArray, height: DualArray,
                samples: int, segments: int) -> None:
    """Sweep a circular section along a Catmull-Rom arc in the x/y plane.

    The arc's end points lie exactly on the outer body profile, so the
    handle is welded to the surface; interior control points are pushed
    outward by the four offset parameters.
    """
    n_par = duals.n_params
    offsets = duals[N_PROFILE_CONTROLS + 3:N_PROFILE_CONTROLS + 7]

    t_ctrl = np.linspace(HANDLE_T_TOP, HANDLE_T_BOTTOM, 6)
    Wc, _ = catmull_rom_basis(N_PROFILE_CONTROLS, t_ctrl)
    r_at = da_lincomb(Wc, controls)
    y_at = height * DualArray.constant(t_ctrl, n_par)

    ctrl_x = da_concat([r_at[0:1], r_at[1:5] + offsets, r_at[5:6]])
    ctrl_y = y_at

    n_stations = max(6, samples)
    Wa, dWa = catmull_rom_basis(6, np.linspace(0.0, 1.0, n_stations))
    arc_x = da_lincomb(Wa, ctrl_x)
    arc_y = da_lincomb(Wa, ctrl_y)
    tan_x = da_lincomb(dWa, ctrl_x)
    tan_y = da_lincomb(dWa, ctrl_y)
    tlen = (tan_x * tan_x + tan_y * tan_y).sqrt()
    nx = -tan_y / tlen  # in-plane normal of the arc
    ny = tan_x / tlen

    tube_r = thickness * 2.0 + 0.02
    sides = max(6, segments // 4)
    phi = np.linspace(0.0, 2.0 * math.pi, sides + 1)
    cos_p, sin_p = np.cos(phi), np.sin(phi)

    rad_x = tube_r * nx  # per-station radial vector scaled by tube radius
    rad_y = tube_r * ny
    X = arc_x.expand() + da_outer(rad_x, cos_p)
    Y = arc_y.expand() + da_outer(rad_y, cos_p)
    Z = da_outer(tube_r.broadcast_to((n_stations,)), sin_p)

    normals = np.empty(X.shape + (3,))
    normals[..., 0] = nx.v[:, None] * cos_p[None, :]
    normals[..., 1] = ny.v[:, None] * cos_p[None, :]
    normals[..., 2] = sin_p[None, :]
    builder.add_grid(X, Y, Z, normals,
                     us=phi / (2.0 * math.pi),
                     vs=np.linspace(0.0, 1.0, n_stations),
                     label="handle")
