# spnet/projection/raycast.py
"""
Ray / triangle-mesh intersection.

Two casters share one Moller-Trumbore kernel: a brute-force caster that tests
every ray against every triangle (the reference), and a BVH caster that only
tests rays against the leaves whose boxes they enter. The kernel evaluates
each (ray, triangle) pair with the same scalar arithmetic in both casters, so
their hit parameters agree bit for bit.
"""

import logging
from typing import List, Tuple

import numpy as np

from ..config import BVH_LEAF_SIZE, RAY_EPSILON
from ..state_management import CasterKind, HitPolicy
from ..geometry.mesh import TriangleMesh

logger = logging.getLogger(__name__)

# rays x triangles evaluated per brute-force chunk
_CHUNK_ELEMENTS = 1 << 18
# slack added to BVH boxes so rounding in the slab test never culls a grazing hit
_BOX_PAD = 1e-7


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([
        a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
        a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
        a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
    ], axis=-1)


def intersect(origins: np.ndarray, directions: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Moller-Trumbore hit parameters for every (ray, triangle) pair.

    Args:
        origins: (R, 3) ray origins
        directions: (R, 3) ray directions
        triangles: (T, 3, 3) triangle corners

    Returns:
        (R, T) array of t >= 0 for hits and NaN for misses
    """
    o = origins[:, None, :]
    d = directions[:, None, :]
    v0 = triangles[None, :, 0, :]
    e1 = triangles[None, :, 1, :] - v0
    e2 = triangles[None, :, 2, :] - v0

    p = _cross(d, e2)
    det = _dot(e1, p)
    valid = np.abs(det) > RAY_EPSILON
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_det = np.where(valid, 1.0 / det, 0.0)
        s = o - v0
        u = _dot(s, p) * inv_det
        q = _cross(s, e1)
        v = _dot(d, q) * inv_det
        t = _dot(e2, q) * inv_det

    hit = valid & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t >= 0.0)
    return np.where(hit, t, np.nan)


def _select(t: np.ndarray, policy: HitPolicy) -> np.ndarray:
    """Reduce (R, T) hit parameters to one per ray; NaN where nothing was hit"""
    if t.shape[1] == 0:
        return np.full(t.shape[0], np.nan)
    if policy == HitPolicy.NEAREST:
        return np.fmin.reduce(t, axis=1)
    return np.fmax.reduce(t, axis=1)


def _combine(best: np.ndarray, candidate: np.ndarray, policy: HitPolicy) -> np.ndarray:
    if policy == HitPolicy.NEAREST:
        return np.fmin(best, candidate)
    return np.fmax(best, candidate)


def _usable_triangles(mesh: TriangleMesh) -> np.ndarray:
    """Corner coordinates of the non-degenerate triangles, in face order"""
    triangles = mesh.triangles()
    areas = mesh.face_areas()
    keep = areas > 0.0
    if not np.all(keep):
        logger.debug("%s: skipping %d zero-area triangles", mesh.object_id, int((~keep).sum()))
    return np.ascontiguousarray(triangles[keep])


class BruteForceCaster:
    """Tests every ray against every triangle"""

    def __init__(self, mesh: TriangleMesh):
        self.triangles = _usable_triangles(mesh)

    def cast(self, origins: np.ndarray, directions: np.ndarray, policy: HitPolicy = HitPolicy.FARTHEST) -> np.ndarray:
        """Hit parameter per ray, 0 where the ray misses"""
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        result = np.full(len(directions), np.nan)
        if len(self.triangles) == 0:
            return np.zeros(len(directions))
        chunk = max(1, _CHUNK_ELEMENTS // len(self.triangles))
        for start in range(0, len(directions), chunk):
            stop = start + chunk
            t = intersect(origins[start:stop], directions[start:stop], self.triangles)
            result[start:stop] = _select(t, policy)
        return np.nan_to_num(result, nan=0.0)


class BVHCaster:
    """Bounding volume hierarchy with median splits along the widest centroid axis"""

    def __init__(self, mesh: TriangleMesh, leaf_size: int = BVH_LEAF_SIZE):
        triangles = _usable_triangles(mesh)
        self.leaf_size = leaf_size
        self.order, self.node_min, self.node_max, self.children, self.spans = self._build(triangles, leaf_size)
        self.triangles = np.ascontiguousarray(triangles[self.order])
        logger.debug("BVH for %s: %d triangles, %d nodes", mesh.object_id, len(triangles), len(self.spans))

    @staticmethod
    def _build(triangles: np.ndarray, leaf_size: int):
        count = len(triangles)
        order = np.arange(count)
        tri_min = triangles.min(axis=1)
        tri_max = triangles.max(axis=1)
        centroids = triangles.mean(axis=1)

        node_min: List[np.ndarray] = []
        node_max: List[np.ndarray] = []
        children: List[List[int]] = []
        spans: List[Tuple[int, int]] = []

        def new_node(start: int, end: int) -> int:
            members = order[start:end]
            node_min.append(tri_min[members].min(axis=0) - _BOX_PAD)
            node_max.append(tri_max[members].max(axis=0) + _BOX_PAD)
            children.append([-1, -1])
            spans.append((start, end))
            return len(spans) - 1

        if count == 0:
            return order, np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int64), []

        stack = [new_node(0, count)]
        while stack:
            node = stack.pop()
            start, end = spans[node]
            if end - start <= leaf_size:
                continue
            members = order[start:end]
            c = centroids[members]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order[start:end] = members[np.argsort(c[:, axis], kind="stable")]
            mid = (start + end) // 2
            left, right = new_node(start, mid), new_node(mid, end)
            children[node] = [left, right]
            stack.extend([right, left])

        return order, np.array(node_min), np.array(node_max), np.array(children, dtype=np.int64), spans

    @staticmethod
    def _slab(origins: np.ndarray, directions: np.ndarray, box_min: np.ndarray, box_max: np.ndarray) -> np.ndarray:
        """Rays (forward half-lines) that enter the box"""
        parallel = directions == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / directions
            t0 = (box_min - origins) * inv
            t1 = (box_max - origins) * inv
        near = np.minimum(t0, t1)
        far = np.maximum(t0, t1)
        inside = (origins >= box_min) & (origins <= box_max)
        near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
        far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
        t_enter = near.max(axis=1)
        t_exit = far.min(axis=1)
        return t_exit >= np.maximum(t_enter, 0.0)

    def cast(self, origins: np.ndarray, directions: np.ndarray, policy: HitPolicy = HitPolicy.FARTHEST) -> np.ndarray:
        """Hit parameter per ray, 0 where the ray misses"""
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        best = np.full(len(directions), np.nan)
        if len(self.spans) == 0 or len(directions) == 0:
            return np.zeros(len(directions))

        stack = [(0, np.arange(len(directions)))]
        while stack:
            node, rays = stack.pop()
            entered = self._slab(origins[rays], directions[rays], self.node_min[node], self.node_max[node])
            rays = rays[entered]
            if len(rays) == 0:
                continue
            left, right = self.children[node]
            if left < 0:
                start, end = self.spans[node]
                t = intersect(origins[rays], directions[rays], self.triangles[start:end])
                best[rays] = _combine(best[rays], _select(t, policy), policy)
            else:
                stack.append((right, rays))
                stack.append((left, rays))
        return np.nan_to_num(best, nan=0.0)


def build_caster(mesh: TriangleMesh, kind: CasterKind = CasterKind.BVH):
    if kind == CasterKind.BRUTE:
        return BruteForceCaster(mesh)
    return BVHCaster(mesh)


def ray_cast(mesh: TriangleMesh, direction, policy: HitPolicy = HitPolicy.FARTHEST) -> float:
    """Distance along a unit direction from the origin to the selected hit, 0 on a miss"""
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    origin = np.zeros((1, 3))
    return float(BruteForceCaster(mesh).cast(origin, direction, policy)[0])
