# spnet/projection/projections.py
"""
Sphere-to-plane map projections and the pixel grids they are rasterized on.

Longitude is measured as atan2(e_x, e_y), so lambda = 0 looks along +y and
lambda = pi/2 along +x. Every function has a scalar form working on the
SphereCoord / PlaneCoord models and an array form used by the renderer.
"""

import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..exceptions import NotUnit, OutOfRegion
from ..state_management import ProjectionKind

UNIT_TOLERANCE = 1e-6
HALF_PI = math.pi / 2.0

_K7_SCALE = 1.5
_ECKERT_K = math.sqrt(2.0 * math.pi / 3.0)
_SQRT_6PI = math.sqrt(6.0 * math.pi)

# (u_min, u_max, v_min, v_max) of the analytic image of each mapping
PLANE_BOUNDS = {
    ProjectionKind.UV: (0.0, 1.0, 0.0, 1.0),
    ProjectionKind.KAVRAYSKIY_VII: (
        -_K7_SCALE * math.pi * math.sqrt(1.0 / 3.0),
        _K7_SCALE * math.pi * math.sqrt(1.0 / 3.0),
        -HALF_PI,
        HALF_PI,
    ),
    ProjectionKind.ECKERT_IV: (
        -2.0 * math.pi * 2.0 / _SQRT_6PI,
        2.0 * math.pi * 2.0 / _SQRT_6PI,
        -_ECKERT_K,
        _ECKERT_K,
    ),
    ProjectionKind.CASSINI: (-math.pi, math.pi, -HALF_PI, HALF_PI),
    # orthographic (y, z) window and cylindrical (psi, z) window
    ProjectionKind.DEPTH_MAP_YZ: (-1.0, 1.0, -1.0, 1.0),
    ProjectionKind.PANORAMA_Z: (-math.pi, math.pi, -1.0, 1.0),
}


class SphereCoord(BaseModel):
    """Longitude in [-pi, pi], latitude in [-pi/2, pi/2]"""
    model_config = ConfigDict(frozen=True)

    lon: float = Field(ge=-math.pi, le=math.pi)
    lat: float = Field(ge=-HALF_PI, le=HALF_PI)

    def to_direction(self) -> np.ndarray:
        return lonlat_to_direction(np.float64(self.lon), np.float64(self.lat))


class PlaneCoord(BaseModel):
    model_config = ConfigDict(frozen=True)

    u: float
    v: float

    @field_validator("u", "v", mode="after")
    @classmethod
    def validate_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError(f"Plane coordinate must be finite, got {value}")
        return value

# ================================
# DIRECTIONS
# ================================

def direction_to_lonlat(directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Array form of spherical_coords; expects unit vectors in the last axis"""
    directions = np.asarray(directions, dtype=np.float64)
    lon = np.arctan2(directions[..., 0], directions[..., 1])
    lat = np.arcsin(np.clip(directions[..., 2], -1.0, 1.0))
    return lon, lat


def lonlat_to_direction(lon: np.ndarray, lat: np.ndarray) -> np.ndarray:
    """Unit vectors e = (cos(lat) sin(lon), cos(lat) cos(lon), sin(lat))"""
    cos_lat = np.cos(lat)
    return np.stack([cos_lat * np.sin(lon), cos_lat * np.cos(lon), np.sin(lat)], axis=-1)


def spherical_coords(direction) -> SphereCoord:
    """Longitude atan2(e_x, e_y) and latitude arcsin(e_z) of a unit vector"""
    e = np.asarray(direction, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(e))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise NotUnit(f"Direction {e.tolist()} has norm {norm:.9g}")
    lon, lat = direction_to_lonlat(e)
    return SphereCoord(lon=float(lon), lat=float(lat))

# ================================
# FORWARD AND INVERSE MAPPINGS
# ================================

def _require_spherical(kind: ProjectionKind) -> None:
    if not kind.is_spherical:
        raise ValueError(f"{kind.value} is an image baseline, not a sphere projection")


def project_arrays(kind: ProjectionKind, lon: np.ndarray, lat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    _require_spherical(kind)
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)

    if kind == ProjectionKind.UV:
        return 0.5 + lon / (2.0 * math.pi), 0.5 - lat / math.pi

    if kind == ProjectionKind.KAVRAYSKIY_VII:
        u = _K7_SCALE * lon * np.sqrt(1.0 / 3.0 - (lat / math.pi) ** 2)
        return u, lat.copy()

    if kind == ProjectionKind.ECKERT_IV:
        q = np.sqrt(4.0 - 3.0 * np.sin(np.abs(lat)))
        u = 2.0 * lon * q / _SQRT_6PI
        # signed ordinate so the southern hemisphere does not fold onto the northern one
        v = np.sign(lat) * _ECKERT_K * (2.0 - q)
        return u, v

    # Cassini
    u = 2.0 * np.arcsin(np.clip(np.cos(lat) * np.sin(lon), -1.0, 1.0))
    with np.errstate(over="ignore"):
        v = np.arctan2(np.tan(lat), np.cos(lon))
    v = np.where(np.abs(lat) >= HALF_PI, np.sign(lat) * HALF_PI, v)
    return u, v


def unproject_arrays(kind: ProjectionKind, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse mapping; returns (lon, lat, valid) where invalid entries are zeroed"""
    _require_spherical(kind)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == ProjectionKind.UV:
            lon = 2.0 * math.pi * (u - 0.5)
            lat = math.pi * (0.5 - v)
            valid = (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (v <= 1.0)

        elif kind == ProjectionKind.KAVRAYSKIY_VII:
            lat = v.copy()
            width = _K7_SCALE * np.sqrt(np.clip(1.0 / 3.0 - (lat / math.pi) ** 2, 0.0, None))
            lon = u / width
            valid = (np.abs(v) <= HALF_PI) & (np.abs(lon) <= math.pi)

        elif kind == ProjectionKind.ECKERT_IV:
            q = 2.0 - np.abs(v) / _ECKERT_K
            sin_abs_lat = (4.0 - q * q) / 3.0
            lat = np.sign(v) * np.arcsin(np.clip(sin_abs_lat, 0.0, 1.0))
            lon = u * _SQRT_6PI / (2.0 * q)
            valid = (np.abs(v) <= _ECKERT_K) & (np.abs(lon) <= math.pi)

        else:
            half_u = u / 2.0
            lat = np.arcsin(np.clip(np.sin(v) * np.cos(half_u), -1.0, 1.0))
            lon = np.arctan2(np.sin(half_u), np.cos(half_u) * np.cos(v))
            valid = (np.abs(u) <= math.pi) & (np.abs(v) <= math.pi)

    valid = valid & np.isfinite(lon) & np.isfinite(lat)
    lon = np.where(valid, lon, 0.0)
    lat = np.where(valid, lat, 0.0)
    return lon, lat, valid


def project(kind: ProjectionKind, coord: SphereCoord) -> PlaneCoord:
    u, v = project_arrays(kind, np.float64(coord.lon), np.float64(coord.lat))
    return PlaneCoord(u=float(u), v=float(v))


def unproject(kind: ProjectionKind, point: PlaneCoord) -> SphereCoord:
    lon, lat, valid = unproject_arrays(kind, np.float64(point.u), np.float64(point.v))
    if not bool(valid):
        raise OutOfRegion(f"({point.u:.6g}, {point.v:.6g}) lies outside the {kind.value} image")
    return SphereCoord(lon=float(lon), lat=float(lat))

# ================================
# PIXEL GRID
# ================================

def plane_bounds(kind: ProjectionKind) -> Tuple[float, float, float, float]:
    return PLANE_BOUNDS[kind]


def pixel_to_plane(kind: ProjectionKind, row: int, col: int, size: int = 128) -> PlaneCoord:
    """Center of pixel (row, col); rows advance along v, columns along u"""
    u_min, u_max, v_min, v_max = plane_bounds(kind)
    u = u_min + (col + 0.5) / size * (u_max - u_min)
    v = v_min + (row + 0.5) / size * (v_max - v_min)
    return PlaneCoord(u=u, v=v)


def plane_to_pixel(kind: ProjectionKind, point: PlaneCoord, size: int = 128) -> Tuple[int, int]:
    u_min, u_max, v_min, v_max = plane_bounds(kind)
    col = (point.u - u_min) / (u_max - u_min) * size - 0.5
    row = (point.v - v_min) / (v_max - v_min) * size - 0.5
    return int(round(row)), int(round(col))


def pixel_grid(kind: ProjectionKind, size: int = 128) -> Tuple[np.ndarray, np.ndarray]:
    """(U, V) plane coordinates of every pixel center, each of shape (size, size)"""
    u_min, u_max, v_min, v_max = plane_bounds(kind)
    centers = (np.arange(size, dtype=np.float64) + 0.5) / size
    us = u_min + centers * (u_max - u_min)
    vs = v_min + centers * (v_max - v_min)
    return np.meshgrid(us, vs, indexing="xy")
