"""Triangle mesh parsing, normalization and rotation"""

from .mesh import IDENTITY, Rotation, TriangleMesh, centroid, normalize, rotate
from .parsing import load_mesh, parse_obj, parse_off

__all__ = [
    "IDENTITY",
    "Rotation",
    "TriangleMesh",
    "centroid",
    "load_mesh",
    "normalize",
    "parse_obj",
    "parse_off",
    "rotate",
]
