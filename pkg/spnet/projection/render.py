# spnet/projection/render.py
"""
Depth image rendering by per-pixel ray casting.

Instead of rotating the mesh for every view, the ray bundle is rotated by the
transpose of the view rotation: casting ray (o, d) against R·mesh hits at the
same t as casting (R^T o, R^T d) against the mesh. One caster built per mesh
therefore serves every view.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..config import SPNET_THREADS
from ..geometry.mesh import IDENTITY, Rotation, TriangleMesh
from ..state_management import CasterKind, HitPolicy, ProjectionKind
from .projections import lonlat_to_direction, pixel_grid, unproject_arrays
from .raycast import build_caster

logger = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = 128


class DepthImage(BaseModel):
    """Square single-channel depth rendering of one view"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    pixels: np.ndarray
    projection_kind: ProjectionKind
    source_id: str = Field(default="", description="Object id of the rendered mesh")
    rotation: Rotation = Field(default=IDENTITY)

    @field_validator("pixels", mode="before")
    @classmethod
    def validate_pixels(cls, v) -> np.ndarray:
        array = np.array(v, dtype=np.float32, copy=True)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError(f"Depth image must be a square 2D grid, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("Depth image contains non-finite pixels")
        if array.size and (array.min() < 0.0 or array.max() > 1.0):
            raise ValueError(f"Depth values must lie in [0, 1], got [{array.min()}, {array.max()}]")
        array.flags.writeable = False
        return array

    @property
    def size(self) -> int:
        return int(self.pixels.shape[0])

# ================================
# RAY BUNDLES
# ================================

def _spherical_rays(kind: ProjectionKind, size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    u, v = pixel_grid(kind, size)
    lon, lat, valid = unproject_arrays(kind, u, v)
    directions = lonlat_to_direction(lon, lat).reshape(-1, 3)
    origins = np.zeros_like(directions)
    return origins, directions, valid.reshape(-1)


def _depth_map_rays(size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parallel rays along +x from the plane x = -1, columns over y and rows over z"""
    y, z = pixel_grid(ProjectionKind.DEPTH_MAP_YZ, size)
    origins = np.stack([np.full(y.shape, -1.0), y, z], axis=-1).reshape(-1, 3)
    directions = np.tile([1.0, 0.0, 0.0], (origins.shape[0], 1))
    return origins, directions, np.ones(origins.shape[0], dtype=bool)


def _panorama_rays(size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Horizontal rays leaving the z axis; columns over psi, rows over z from top to bottom"""
    psi, v = pixel_grid(ProjectionKind.PANORAMA_Z, size)
    z = -v
    origins = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1).reshape(-1, 3)
    directions = np.stack([np.sin(psi), np.cos(psi), np.zeros_like(psi)], axis=-1).reshape(-1, 3)
    return origins, directions, np.ones(origins.shape[0], dtype=bool)


def ray_bundle(kind: ProjectionKind, size: int = DEFAULT_IMAGE_SIZE) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(origins, directions, valid) for every pixel in row-major order"""
    if kind == ProjectionKind.DEPTH_MAP_YZ:
        return _depth_map_rays(size)
    if kind == ProjectionKind.PANORAMA_Z:
        return _panorama_rays(size)
    return _spherical_rays(kind, size)

# ================================
# RENDERING
# ================================

def _pixel_values(kind: ProjectionKind, t: np.ndarray) -> np.ndarray:
    if kind == ProjectionKind.DEPTH_MAP_YZ:
        # rays start 2 units from the far side of the unit cube window
        return np.where(t > 0.0, 1.0 - t / 2.0, 0.0)
    return t


def _render_with(
    caster,
    kind: ProjectionKind,
    rotation: Rotation,
    size: int,
    hit_policy: HitPolicy,
    source_id: str,
) -> DepthImage:
    origins, directions, valid = ray_bundle(kind, size)
    matrix = rotation.matrix()
    if not rotation.is_identity:
        origins = origins @ matrix
        directions = directions @ matrix

    # the depth map always records the first surface the parallel rays meet
    policy = HitPolicy.NEAREST if kind == ProjectionKind.DEPTH_MAP_YZ else hit_policy

    values = np.zeros(size * size)
    if np.any(valid):
        t = caster.cast(origins[valid], directions[valid], policy)
        values[valid] = _pixel_values(kind, t)
    pixels = np.clip(values, 0.0, 1.0).reshape(size, size).astype(np.float32)
    return DepthImage(pixels=pixels, projection_kind=kind, source_id=source_id, rotation=rotation)


def render(
    mesh: TriangleMesh,
    kind: ProjectionKind,
    rotation: Rotation = IDENTITY,
    size: int = DEFAULT_IMAGE_SIZE,
    hit_policy: HitPolicy = HitPolicy.FARTHEST,
    caster_kind: CasterKind = CasterKind.BVH,
    caster=None,
) -> DepthImage:
    """
    Render one view of a normalized mesh.

    Args:
        mesh: mesh already scaled into the unit sphere
        kind: projection or image baseline
        rotation: view rotation applied to the object
        size: image side in pixels
        hit_policy: which intersection along a ray supplies the value
        caster_kind: caster built when no caster is passed in
        caster: prebuilt caster for this mesh, shared across views

    Returns:
        DepthImage with background pixels at 0
    """
    if caster is None:
        caster = build_caster(mesh, caster_kind)
    return _render_with(caster, kind, rotation, size, hit_policy, mesh.object_id)


def render_views(
    mesh: TriangleMesh,
    kind: ProjectionKind,
    rotations: Sequence[Rotation],
    size: int = DEFAULT_IMAGE_SIZE,
    hit_policy: HitPolicy = HitPolicy.FARTHEST,
    caster_kind: CasterKind = CasterKind.BVH,
    max_workers: Optional[int] = None,
) -> List[DepthImage]:
    """Render several views with one caster; output order follows `rotations`"""
    caster = build_caster(mesh, caster_kind)
    workers = max(1, min(max_workers or SPNET_THREADS, len(rotations)))
    logger.debug("rendering %d %s views of %s on %d workers", len(rotations), kind.value, mesh.object_id, workers)

    def job(rotation: Rotation) -> DepthImage:
        return _render_with(caster, kind, rotation, size, hit_policy, mesh.object_id)

    if workers == 1:
        return [job(r) for r in rotations]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(job, rotations))
