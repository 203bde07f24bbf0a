"""Shared fixtures: primitive meshes and small reconstruction configs."""

import math

import numpy as np
import pytest

from procrecon.mesh import TriangleMesh


def make_cube(half: float = 1.0) -> TriangleMesh:
    """Axis-aligned cube with side 2*half, centered at the origin."""
    s = half
    corners = np.array([
        [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
        [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
    ], dtype=np.float64)
    quads = [
        (0, 1, 2, 3), (5, 4, 7, 6), (4, 0, 3, 7),
        (1, 5, 6, 2), (4, 5, 1, 0), (3, 2, 6, 7),
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append((a, b, c))
        tris.append((a, c, d))
    normals = corners / np.linalg.norm(corners, axis=1, keepdims=True)
    uvs = np.zeros((8, 2))
    return TriangleMesh(corners.ravel(), normals.ravel(), uvs.ravel(), tris,
                        ["cube"] * len(tris))


def make_uv_sphere(radius: float = 1.0, rings: int = 24, segments: int = 48
                   ) -> TriangleMesh:
    # seam columns wrap (no duplicated vertices) so the vertex centroid is
    # exactly the sphere center and normalized() does not shift the mesh
    verts, norms, uvs = [], [], []
    for i in range(rings + 1):
        phi = math.pi * i / rings
        for j in range(segments):
            theta = 2.0 * math.pi * j / segments
            n = (math.sin(phi) * math.cos(theta), math.cos(phi),
                 math.sin(phi) * math.sin(theta))
            verts.append(tuple(radius * c for c in n))
            norms.append(n)
            uvs.append((j / segments, i / rings))
    tris = []
    for i in range(rings):
        for j in range(segments):
            jn = (j + 1) % segments
            a = i * segments + j
            b = i * segments + jn
            c = (i + 1) * segments + jn
            d = (i + 1) * segments + j
            tris.append((a, b, c))
            tris.append((a, c, d))
    return TriangleMesh(np.array(verts).ravel(), np.array(norms).ravel(),
                        np.array(uvs).ravel(), tris, ["sphere"] * len(tris))


@pytest.fixture(scope="session")
def cube_mesh():
    return make_cube()


@pytest.fixture(scope="session")
def sphere_mesh():
    return make_uv_sphere()
