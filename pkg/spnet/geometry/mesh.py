# spnet/geometry/mesh.py
"""
Triangle meshes and rigid rotations.

Meshes are immutable: every transformation returns a new TriangleMesh whose
arrays are flagged read-only, so one mesh can be shared by concurrent renderers.
"""

import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..exceptions import DegenerateMesh, EmptyMesh
from ..state_management import CentroidMode

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_DEGENERATE_RADIUS = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


class Rotation(BaseModel):
    """Azimuth about the z (gravity) axis followed by elevation about the y axis"""
    model_config = ConfigDict(frozen=True)

    azimuth: float = Field(default=0.0, description="Radians about z, wrapped into [0, 2pi)")
    elevation: float = Field(default=0.0, description="Radians about y, wrapped into [0, 2pi)")

    @field_validator("azimuth", "elevation", mode="after")
    @classmethod
    def wrap_angle(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f"Rotation angle must be finite, got {v}")
        wrapped = v % TWO_PI
        return 0.0 if wrapped >= TWO_PI else wrapped

    @classmethod
    def from_degrees(cls, azimuth: float = 0.0, elevation: float = 0.0) -> "Rotation":
        return cls(azimuth=math.radians(azimuth), elevation=math.radians(elevation))

    def matrix(self) -> np.ndarray:
        """R = R_y(elevation) @ R_z(azimuth)"""
        ca, sa = math.cos(self.azimuth), math.sin(self.azimuth)
        ce, se = math.cos(self.elevation), math.sin(self.elevation)
        r_z = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
        r_y = np.array([[ce, 0.0, se], [0.0, 1.0, 0.0], [-se, 0.0, ce]])
        return r_y @ r_z

    @property
    def is_identity(self) -> bool:
        return self.azimuth == 0.0 and self.elevation == 0.0


IDENTITY = Rotation()


class TriangleMesh(BaseModel):
    """Vertices (V, 3) float64 and triangle faces (F, 3) int64"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vertices: np.ndarray
    faces: np.ndarray
    label: Optional[str] = Field(default=None, description="Category identifier")
    object_id: str = Field(default="", description="Object identifier")

    @field_validator("vertices", mode="before")
    @classmethod
    def validate_vertices(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(array)):
            raise ValueError("Vertex coordinates must be finite")
        return _frozen(array)

    @field_validator("faces", mode="before")
    @classmethod
    def validate_faces(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.int64).reshape(-1, 3)
        return _frozen(array)

    @model_validator(mode="after")
    def validate_indices(self) -> "TriangleMesh":
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError(
                f"Face index out of range for {len(self.vertices)} vertices"
            )
        return self

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_faces(self) -> int:
        return int(self.faces.shape[0])

    def triangles(self) -> np.ndarray:
        """Corner coordinates, shape (F, 3, 3)"""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(vertices=vertices, faces=self.faces, label=self.label, object_id=self.object_id)

    def with_faces(self, faces: np.ndarray) -> "TriangleMesh":
        return TriangleMesh(vertices=self.vertices, faces=faces, label=self.label, object_id=self.object_id)


def centroid(mesh: TriangleMesh, mode: CentroidMode = CentroidMode.BBOX) -> np.ndarray:
    """Bounding-box midpoint (default) or vertex mean"""
    if mesh.num_vertices == 0:
        raise EmptyMesh("Mesh has no vertices")
    if mode == CentroidMode.MEAN:
        return mesh.vertices.mean(axis=0)
    return 0.5 * (mesh.vertices.min(axis=0) + mesh.vertices.max(axis=0))


def normalize(mesh: TriangleMesh, mode: CentroidMode = CentroidMode.BBOX) -> TriangleMesh:
    """Center the mesh on the origin and scale it into the unit sphere"""
    center = centroid(mesh, mode)
    shifted = mesh.vertices - center
    radius = float(np.max(np.linalg.norm(shifted, axis=1)))
    if radius < _DEGENERATE_RADIUS:
        raise DegenerateMesh(f"All vertices of '{mesh.object_id}' coincide")
    logger.debug("normalize %s: center=%s radius=%.6g", mesh.object_id, center, radius)
    return mesh.with_vertices(shifted / radius)


def rotate(mesh: TriangleMesh, rotation: Rotation) -> TriangleMesh:
    if rotation.is_identity:
        return mesh
    return mesh.with_vertices(mesh.vertices @ rotation.matrix().T)
