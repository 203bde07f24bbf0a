"""Stochastic rule-based tree generator (non-differentiable).

A recursive branch skeleton is realized as truncated-cone segments plus
leaf quads on the deepest branch level. Every stochastic draw comes from
RNGs derived from the seed argument, so identical (P, seed) gives a
bit-identical mesh. No Jacobian is produced: tiny parameter changes move
branches discontinuously, which is exactly why this generator goes through
the genetic path instead of gradient descent.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from ..autodiff import DualArray
from ..mesh import TriangleMesh
from ..params import ParameterVector, ParamKind, ParamSpec
from .common import MeshBuilder

PARAM_SPECS = (
    ParamSpec("trunk_length", ParamKind.CONTINUOUS, 0.6, 2.5),
    ParamSpec("trunk_radius", ParamKind.CONTINUOUS, 0.02, 0.12),
    ParamSpec("levels", ParamKind.DISCRETE, 2, 4, 1,
              description="branching depth including the trunk"),
    ParamSpec("branches", ParamKind.CONTINUOUS, 0.0, 8.0,
              description="children spawned per branch (rounded)"),
    ParamSpec("angle_mean", ParamKind.CONTINUOUS, 0.25, 1.3,
              description="mean branching angle from the parent, radians"),
    ParamSpec("angle_spread", ParamKind.CONTINUOUS, 0.0, 0.5),
    ParamSpec("length_decay", ParamKind.CONTINUOUS, 0.45, 0.8),
    ParamSpec("curvature", ParamKind.CONTINUOUS, 0.0, 0.6),
    ParamSpec("leaf_size", ParamKind.CONTINUOUS, 0.03, 0.25),
    ParamSpec("leaf_density", ParamKind.CONTINUOUS, 0.0, 25.0,
              description="leaves per unit length of deepest-level branches"),
)

SEGMENTS_PER_BRANCH = 5
MAX_BRANCHES = 400
MAX_LEAVES = 2500
RADIUS_DECAY = 0.55
TIP_TAPER = 0.35


@dataclass
class Branch:
    points: np.ndarray  # (SEGMENTS_PER_BRANCH + 1, 3)
    radius: float
    level: int
    length: float


def _validate(P: ParameterVector):
    names = tuple(s.name for s in P.spec)
    expected = tuple(s.name for s in PARAM_SPECS)
    if names != expected:
        raise ValueError(f"tree: parameter names {names} do not match spec {expected}")


def _unit(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return v / n if n > 1e-12 else np.array([0.0, 1.0, 0.0])


def _cross3(a, b) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _perp_frame(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = (0.0, 1.0, 0.0) if abs(t[1]) < 0.9 else (1.0, 0.0, 0.0)
    u = _unit(_cross3(t, helper))
    v = _cross3(t, u)
    return u, v


def build_skeleton(P: ParameterVector, seed: int) -> list[Branch]:
    """Deterministic recursive skeleton; leaves are derived from it separately."""
    _validate(P)
    rng = random.Random(int(seed))
    levels = int(round(P["levels"]))
    per_level = int(round(P["branches"]))
    curvature = P["curvature"]
    angle_mean = P["angle_mean"]
    angle_spread = P["angle_spread"]
    decay = P["length_decay"]

    branches: list[Branch] = []

    def grow(base: np.ndarray, direction: np.ndarray, length: float,
             radius: float, level: int) -> None:
        if len(branches) >= MAX_BRANCHES:
            return
        pts = [base]
        d = direction.copy()
        step = length / SEGMENTS_PER_BRANCH
        for _ in range(SEGMENTS_PER_BRANCH):
            bend = np.array([rng.gauss(0.0, 1.0) for _ in range(3)])
            d = _unit(d + curvature * 0.25 * bend)
            pts.append(pts[-1] + d * step)
        pts = np.asarray(pts)
        branches.append(Branch(pts, radius, level, length))
        if level + 1 >= levels:
            return
        for _ in range(per_level):
            t_pos = rng.uniform(0.35, 0.95)
            idx = t_pos * SEGMENTS_PER_BRANCH
            k = min(int(idx), SEGMENTS_PER_BRANCH - 1)
            frac = idx - k
            point = pts[k] * (1 - frac) + pts[k + 1] * frac
            tangent = _unit(pts[k + 1] - pts[k])
            u, v = _perp_frame(tangent)
            angle = min(max(rng.gauss(angle_mean, angle_spread), 0.05), 1.5)
            azim = rng.uniform(0.0, 2.0 * math.pi)
            child_dir = _unit(
                math.cos(angle) * tangent
                + math.sin(angle) * (math.cos(azim) * u + math.sin(azim) * v)
            )
            child_len = length * decay * rng.uniform(0.85, 1.15)
            grow(point, child_dir, child_len, radius * RADIUS_DECAY, level + 1)

    grow(np.zeros(3), np.array([0.0, 1.0, 0.0]), P["trunk_length"],
         P["trunk_radius"], 0)
    return branches


def _leaf_counts(branches: list[Branch], levels: int, density: float) -> list[int]:
    """Leaves per deepest-level branch; a pure function of the skeleton."""
    counts = []
    total = 0
    for br in branches:
        if br.level != levels - 1 or br.level == 0:
            counts.append(0)
            continue
        c = int(math.floor(density * br.length + 0.5))
        c = max(0, min(c, MAX_LEAVES - total))
        total += c
        counts.append(c)
    return counts


def generate_tree(P: ParameterVector, seed: int) -> TriangleMesh:
    """Generate the tree mesh; identical (P, seed) gives identical buffers."""
    branches = build_skeleton(P, seed)
    levels = int(round(P["levels"]))
    leaf_rng = random.Random(int(seed) ^ 0x5DEECE66D)
    leaf_size = P["leaf_size"]
    counts = _leaf_counts(branches, levels, P["leaf_density"])

    b = MeshBuilder(0)
    for br in branches:
        _tube(b, br)
    for br, count in zip(branches, counts):
        for _ in range(count):
            _leaf(b, br, leaf_size, leaf_rng)
    mesh, _ = b.build()
    return mesh


def _tube(b: MeshBuilder, br: Branch) -> None:
    sides = 6 if br.level <= 1 else 5
    label = "trunk" if br.level == 0 else "branch"
    pts = br.points
    n_rings = len(pts)
    phi = np.linspace(0.0, 2.0 * math.pi, sides + 1)
    cos_p, sin_p = np.cos(phi), np.sin(phi)

    ring_centers = pts
    radii = br.radius * (1.0 - TIP_TAPER * np.arange(n_rings) / (n_rings - 1))
    verts = np.empty((n_rings, sides + 1, 3))
    norms = np.empty_like(verts)
    for k in range(n_rings):
        if k == 0:
            tangent = _unit(pts[1] - pts[0])
        elif k == n_rings - 1:
            tangent = _unit(pts[-1] - pts[-2])
        else:
            tangent = _unit(pts[k + 1] - pts[k - 1])
        u, v = _perp_frame(tangent)
        radial = cos_p[:, None] * u[None, :] + sin_p[:, None] * v[None, :]
        verts[k] = ring_centers[k][None, :] + radii[k] * radial
        norms[k] = radial

    X = DualArray.constant(verts[..., 0], 0)
    Y = DualArray.constant(verts[..., 1], 0)
    Z = DualArray.constant(verts[..., 2], 0)
    b.add_grid(X, Y, Z, norms, us=phi / (2 * math.pi),
               vs=np.linspace(0.0, 1.0, n_rings), label=label)


def _leaf(b: MeshBuilder, br: Branch, size: float, rng: random.Random) -> None:
    pts = br.points
    t = rng.uniform(0.15, 1.0) * SEGMENTS_PER_BRANCH
    k = min(int(t), SEGMENTS_PER_BRANCH - 1)
    frac = t - k
    center = pts[k] * (1 - frac) + pts[k + 1] * frac
    a = rng.uniform(0, 2 * math.pi)
    c = rng.uniform(-1.0, 1.0)
    s = math.sqrt(max(0.0, 1.0 - c * c))
    normal = np.array([s * math.cos(a), c, s * math.sin(a)])
    u, v = _perp_frame(normal)
    half = 0.5 * size * rng.uniform(0.7, 1.3)
    cx, cy, cz = center + normal * 0.01
    ux, uy, uz = u * half
    vx, vy, vz = v * half
    corners = [
        (cx - ux - vx, cy - uy - vy, cz - uz - vz),
        (cx + ux - vx, cy + uy - vy, cz + uz - vz),
        (cx + ux + vx, cy + uy + vy, cz + uz + vz),
        (cx - ux + vx, cy - uy + vy, cz - uz + vz),
    ]
    b.add_quad(corners, tuple(normal), "leaf")


def tree_characteristics(P: ParameterVector, seed: int) -> dict[str, float]:
    """Structural statistics used by the regularized tree fitness."""
    branches = build_skeleton(P, seed)
    levels = int(round(P["levels"]))
    counts = _leaf_counts(branches, levels, P["leaf_density"])
    all_pts = np.concatenate([br.points for br in branches])
    height = float(all_pts[:, 1].max() - min(0.0, float(all_pts[:, 1].min())))
    width = float(
        max(all_pts[:, 0].max() - all_pts[:, 0].min(),
            all_pts[:, 2].max() - all_pts[:, 2].min())
    )
    n_leaves = sum(counts)
    return {
        "branch_vertices": float(len(branches) * (SEGMENTS_PER_BRANCH + 1)),
        "height": max(height, 1e-6),
        "width": max(width, 1e-6),
        "branch_density": max(float(len(branches)) / max(height, 1e-6), 1e-6),
        "leaf_density": max(float(n_leaves) / max(len(branches), 1), 1e-6),
        "leaf_size": float(P["leaf_size"]),
    }
