# spnet/geometry/synth.py
"""Procedural meshes used as a desk-scale labeled corpus."""

import logging
from typing import Callable, Dict, Tuple

import numpy as np

from .mesh import TriangleMesh

logger = logging.getLogger(__name__)


def box() -> TriangleMesh:
    """Axis-aligned cube with corners at (+-1, +-1, +-1)"""
    vertices = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    faces = np.array([
        [0, 1, 3], [0, 3, 2],  # x = -1
        [4, 6, 7], [4, 7, 5],  # x = +1
        [0, 4, 5], [0, 5, 1],  # y = -1
        [2, 3, 7], [2, 7, 6],  # y = +1
        [0, 2, 6], [0, 6, 4],  # z = -1
        [1, 5, 7], [1, 7, 3],  # z = +1
    ])
    return TriangleMesh(vertices=vertices, faces=faces)


def tetrahedron() -> TriangleMesh:
    vertices = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriangleMesh(vertices=vertices, faces=faces)


def icosphere(subdivisions: int = 3) -> TriangleMesh:
    """Unit sphere from a recursively subdivided icosahedron"""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    vertices = [list(np.asarray(v, dtype=np.float64) / np.linalg.norm(v)) for v in vertices]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]

    for _ in range(subdivisions):
        midpoints: Dict[Tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = (np.asarray(vertices[a]) + np.asarray(vertices[b])) / 2.0
                vertices.append(list(m / np.linalg.norm(m)))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = refined

    return TriangleMesh(vertices=np.array(vertices), faces=np.array(faces))


def cylinder(segments: int = 24, height: float = 2.0) -> TriangleMesh:
    """Closed cylinder of radius 1 around the z axis"""
    angles = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    half = height / 2.0
    bottom = np.column_stack([ring, np.full(segments, -half)])
    top = np.column_stack([ring, np.full(segments, half)])
    vertices = np.vstack([bottom, top, [[0.0, 0.0, -half], [0.0, 0.0, half]]])
    bottom_center, top_center = 2 * segments, 2 * segments + 1

    faces = []
    for k in range(segments):
        n = (k + 1) % segments
        faces.append([k, n, segments + n])
        faces.append([k, segments + n, segments + k])
        faces.append([bottom_center, n, k])
        faces.append([top_center, segments + k, segments + n])
    return TriangleMesh(vertices=vertices, faces=np.array(faces))


def torus(major: float = 1.0, minor: float = 0.35, segments: int = 24, rings: int = 12) -> TriangleMesh:
    """Torus around the z axis"""
    u = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    v = np.linspace(0.0, 2.0 * np.pi, rings, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    vertices = np.stack([x, y, z], axis=-1).reshape(-1, 3)

    faces = []
    for i in range(segments):
        for j in range(rings):
            a = i * rings + j
            b = ((i + 1) % segments) * rings + j
            c = ((i + 1) % segments) * rings + (j + 1) % rings
            d = i * rings + (j + 1) % rings
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriangleMesh(vertices=vertices, faces=np.array(faces))


SHAPE_BUILDERS: Dict[str, Callable[[], TriangleMesh]] = {
    "box": box,
    "icosphere": lambda: icosphere(2),
    "cylinder": cylinder,
    "tetrahedron": tetrahedron,
    "torus": torus,
}


def perturb(
    mesh: TriangleMesh,
    rng: np.random.Generator,
    scale_range: float = 0.3,
    jitter: float = 0.01,
) -> TriangleMesh:
    """Random per-axis scale in [1 - scale_range, 1 + scale_range] plus Gaussian vertex jitter"""
    scale = rng.uniform(1.0 - scale_range, 1.0 + scale_range, size=3)
    noise = rng.normal(0.0, jitter, size=mesh.vertices.shape)
    return mesh.with_vertices(mesh.vertices * scale + noise)


def synth_shape(shape: str, rng: np.random.Generator, object_id: str = "") -> TriangleMesh:
    if shape not in SHAPE_BUILDERS:
        raise ValueError(f"Unknown synthetic shape: {shape}")
    mesh = perturb(SHAPE_BUILDERS[shape](), rng)
    return TriangleMesh(vertices=mesh.vertices, faces=mesh.faces, label=shape, object_id=object_id)


def to_off(mesh: TriangleMesh) -> str:
    """Serialize a mesh as an ASCII OFF document with round-trip float precision"""
    lines = ["OFF", f"{mesh.num_vertices} {mesh.num_faces} 0"]
    lines.extend(" ".join(repr(float(c)) for c in vertex) for vertex in mesh.vertices)
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.faces)
    return "\n".join(lines) + "\n"
