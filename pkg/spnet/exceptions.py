# spnet/exceptions.py
"""Error hierarchy shared by every spnet module."""


class SpnetError(Exception):
    """Base class for all spnet errors"""


# ================================
# GEOMETRY
# ================================

class MeshError(SpnetError, ValueError):
    """Invalid mesh input or geometry"""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(MeshError):
    """Missing or unreadable OFF header / counts line"""


class MalformedVertex(MeshError):
    """Vertex record with missing or unparsable coordinates"""


class MalformedFace(MeshError):
    """Face record with fewer than three vertices or unparsable indices"""


class IndexOutOfRange(MeshError):
    """Face references a vertex that does not exist"""


class EmptyMesh(MeshError):
    """Mesh without vertices or faces"""


class DegenerateMesh(MeshError):
    """All vertices coincide, so the mesh cannot be normalized"""


# ================================
# PROJECTION
# ================================

class NotUnit(SpnetError, ValueError):
    """Direction vector is not of unit length"""


class OutOfRegion(SpnetError, ValueError):
    """Plane coordinate lies outside the projection's image"""


# ================================
# NEURAL NETWORK
# ================================

class ShapeMismatch(SpnetError, ValueError):
    """Tensor shapes are inconsistent for the requested operation"""


class OddSpatialDim(SpnetError, ValueError):
    """2x2 pooling requires even spatial extents"""


class NonFiniteTensor(SpnetError, FloatingPointError):
    """An operation produced NaN or Inf"""


class EmptyViews(SpnetError, ValueError):
    """Aggregation over zero views"""


# ================================
# ARTIFACTS AND ORCHESTRATION
# ================================

class FormatError(SpnetError, ValueError):
    """Binary artifact has a bad magic, version or is truncated"""


class ConfigError(SpnetError, ValueError):
    """Run configuration failed validation"""


class ManifestError(SpnetError, ValueError):
    """Dataset manifest is inconsistent"""


class StageDependency(SpnetError, RuntimeError):
    """A pipeline stage is missing the artifact of a previous stage"""
