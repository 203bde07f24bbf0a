"""Triangle meshes with per-triangle part labels, plus Wavefront OBJ I/O.

Part labels ("body", "handle", "wall", "window", ...) preserve the object
structure through reconstruction and are emitted as OBJ ``g`` groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Labels excluded from silhouette masks: glass does not block a silhouette.
TRANSPARENT_LABELS = frozenset({"window"})


@dataclass
class TriangleMesh:
    positions: np.ndarray  # flat, 3 per vertex
    normals: np.ndarray  # flat, 3 per vertex, unit length
    texcoords: np.ndarray  # flat, 2 per vertex, in [0, 1]
    indices: np.ndarray  # (T, 3) int vertex indices
    part_labels: list[str]  # one label per triangle

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).ravel()
        self.normals = np.asarray(self.normals, dtype=np.float64).ravel()
        self.texcoords = np.asarray(self.texcoords, dtype=np.float64).ravel()
        self.indices = np.asarray(self.indices, dtype=np.int32).reshape(-1, 3)
        self.part_labels = list(self.part_labels)

    @property
    def vertex_count(self) -> int:
        return len(self.positions) // 3

    @property
    def triangle_count(self) -> int:
        return len(self.indices)

    def vertices(self) -> np.ndarray:
        return self.positions.reshape(-1, 3)

    def validate(self) -> None:
        """Raise if any TriangleMesh invariant is violated."""
        if len(self.positions) % 3 or len(self.normals) != len(self.positions):
            raise ValueError("positions/normals length mismatch")
        if len(self.texcoords) != 2 * self.vertex_count:
            raise ValueError("texcoords length mismatch")
        if len(self.part_labels) != self.triangle_count:
            raise ValueError("one part label required per triangle")
        if self.triangle_count:
            if self.indices.min() < 0 or self.indices.max() >= self.vertex_count:
                raise ValueError("triangle index out of range")
        if self.vertex_count:
            norms = np.linalg.norm(self.normals.reshape(-1, 3), axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise ValueError("normals must be unit length within 1e-4")
            if self.texcoords.min() < -1e-9 or self.texcoords.max() > 1 + 1e-9:
                raise ValueError("texcoords must lie in [0, 1]")

    def label_mask(self, exclude: frozenset[str] = frozenset()) -> np.ndarray:
        """Boolean per-triangle mask selecting labels not in ``exclude``."""
        return np.array([lab not in exclude for lab in self.part_labels], dtype=bool)

    def opaque_indices(self) -> np.ndarray:
        """Triangles that contribute to silhouette masks."""
        return self.indices[self.label_mask(TRANSPARENT_LABELS)]

    def indices_for_labels(self, labels) -> np.ndarray:
        wanted = set(labels)
        keep = np.array([lab in wanted for lab in self.part_labels], dtype=bool)
        return self.indices[keep]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices()
        return v.min(axis=0), v.max(axis=0)

    def normalized(self) -> "TriangleMesh":
        """Copy centered at the vertex centroid, scaled to unit bounding-sphere radius."""
        v = self.vertices()
        center = v.mean(axis=0)
        shifted = v - center
        radius = np.linalg.norm(shifted, axis=1).max()
        if radius <= 0:
            raise ValueError("degenerate mesh: zero bounding radius")
        return TriangleMesh(
            (shifted / radius).ravel(),
            self.normals.copy(),
            self.texcoords.copy(),
            self.indices.copy(),
            list(self.part_labels),
        )


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    offset = 0
    pos, nrm, tex, idx, labels = [], [], [], [], []
    for m in meshes:
        pos.append(m.positions)
        nrm.append(m.normals)
        tex.append(m.texcoords)
        idx.append(m.indices + offset)
        labels.extend(m.part_labels)
        offset += m.vertex_count
    return TriangleMesh(
        np.concatenate(pos) if pos else np.zeros(0),
        np.concatenate(nrm) if nrm else np.zeros(0),
        np.concatenate(tex) if tex else np.zeros(0),
        np.concatenate(idx) if idx else np.zeros((0, 3), dtype=np.int32),
        labels,
    )


def save_obj(mesh: TriangleMesh, path: Path) -> None:
    """Write v/vn/vt/f records; part labels become ``g`` group headers."""
    path = Path(path)
    verts = mesh.vertices()
    normals = mesh.normals.reshape(-1, 3)
    uvs = mesh.texcoords.reshape(-1, 2)
    lines = []
    for v in verts:
        lines.append(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g}")
    for t in uvs:
        lines.append(f"vt {t[0]:.8g} {t[1]:.8g}")
    for n in normals:
        lines.append(f"vn {n[0]:.8g} {n[1]:.8g} {n[2]:.8g}")
    current = None
    for tri, label in zip(mesh.indices, mesh.part_labels):
        if label != current:
            lines.append(f"g {label}")
            current = label
        a, b, c = (int(i) + 1 for i in tri)
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
    path.write_text("\n".join(lines) + "\n")


def load_obj(path: Path) -> TriangleMesh:
    """Read an OBJ file; polygons are fan-triangulated, groups become labels.

    Normals/texcoords are taken per-position-index when present and filled
    with defaults otherwise, which is enough for silhouette evaluation.
    """
    path = Path(path)
    verts: list[list[float]] = []
    norms: list[list[float]] = []
    uvs: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    labels: list[str] = []
    vert_norm: dict[int, list[float]] = {}
    vert_uv: dict[int, list[float]] = {}
    group = "default"

    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif tag == "vn":
            norms.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            uvs.append([float(x) for x in parts[1:3]])
        elif tag in ("g", "o"):
            group = parts[1] if len(parts) > 1 else "default"
        elif tag == "f":
            corner_ids = []
            for corner in parts[1:]:
                fields = corner.split("/")
                vi = int(fields[0])
                vi = vi - 1 if vi > 0 else len(verts) + vi
                corner_ids.append(vi)
                if len(fields) > 1 and fields[1]:
                    ti = int(fields[1])
                    vert_uv[vi] = uvs[ti - 1 if ti > 0 else len(uvs) + ti]
                if len(fields) > 2 and fields[2]:
                    ni = int(fields[2])
                    vert_norm[vi] = norms[ni - 1 if ni > 0 else len(norms) + ni]
            for k in range(1, len(corner_ids) - 1):
                tris.append((corner_ids[0], corner_ids[k], corner_ids[k + 1]))
                labels.append(group)

    n_v = len(verts)
    positions = np.asarray(verts, dtype=np.float64).reshape(n_v, 3)
    normals = np.zeros((n_v, 3))
    normals[:, 1] = 1.0
    texcoords = np.zeros((n_v, 2))
    for vi, n in vert_norm.items():
        length = float(np.linalg.norm(n))
        normals[vi] = np.asarray(n) / length if length > 0 else (0.0, 1.0, 0.0)
    for vi, t in vert_uv.items():
        texcoords[vi] = np.clip(t, 0.0, 1.0)
    return TriangleMesh(positions.ravel(), normals.ravel(), texcoords.ravel(), tris, labels)
