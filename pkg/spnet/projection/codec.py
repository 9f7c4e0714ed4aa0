# spnet/projection/codec.py
"""
SPDI binary container for depth images.

Layout (little-endian): magic "SPDI", u16 version, u8 kind, u16 rows, u16 cols,
f64 azimuth, f64 elevation, then rows*cols f32 pixels in row-major order.
Kind codes follow the ProjectionKind declaration order; code 255 marks a
generic grid such as a similarity matrix.
"""

import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image

from ..exceptions import FormatError
from ..geometry.mesh import IDENTITY, Rotation
from ..state_management import ProjectionKind
from .render import DepthImage

logger = logging.getLogger(__name__)

MAGIC = b"SPDI"
VERSION = 1
GRID_KIND = 255

_HEADER = struct.Struct("<4sHBHHdd")
_KINDS = list(ProjectionKind)


def kind_code(kind: ProjectionKind) -> int:
    return _KINDS.index(kind)


def encode_grid(values: np.ndarray, code: int = GRID_KIND, rotation: Rotation = IDENTITY) -> bytes:
    """Serialize any 2D grid with an explicit kind code"""
    grid = np.ascontiguousarray(values, dtype="<f4")
    if grid.ndim != 2:
        raise FormatError(f"SPDI stores 2D grids, got shape {grid.shape}")
    rows, cols = grid.shape
    header = _HEADER.pack(MAGIC, VERSION, code, rows, cols, rotation.azimuth, rotation.elevation)
    return header + grid.tobytes()


def decode_grid(data: bytes) -> Tuple[int, np.ndarray, Rotation]:
    """Parse an SPDI payload into (kind code, float32 grid, rotation)"""
    if len(data) < _HEADER.size:
        raise FormatError(f"SPDI payload truncated: {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, code, rows, cols, azimuth, elevation = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"Bad SPDI magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"Unsupported SPDI version {version}")
    expected = _HEADER.size + rows * cols * 4
    if len(data) != expected:
        raise FormatError(f"SPDI payload has {len(data)} bytes, expected {expected}")
    grid = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(np.float32)
    return code, grid, Rotation(azimuth=azimuth, elevation=elevation)


def encode(image: DepthImage) -> bytes:
    return encode_grid(image.pixels, kind_code(image.projection_kind), image.rotation)


def decode(data: bytes, source_id: str = "") -> DepthImage:
    code, grid, rotation = decode_grid(data)
    if code >= len(_KINDS):
        raise FormatError(f"SPDI kind code {code} is not a projection")
    return DepthImage(pixels=grid, projection_kind=_KINDS[code], source_id=source_id, rotation=rotation)


def write_image(image: DepthImage, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(image))


def read_image(path: Union[str, Path], source_id: str = "") -> DepthImage:
    path = Path(path)
    try:
        return decode(path.read_bytes(), source_id=source_id)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e


def export_png(values: Union[DepthImage, np.ndarray], path: Union[str, Path]) -> None:
    """16-bit grayscale PNG with value round(65535 * depth)"""
    pixels = values.pixels if isinstance(values, DepthImage) else np.asarray(values)
    levels = np.round(np.clip(pixels.astype(np.float64), 0.0, 1.0) * 65535.0).astype(np.uint16)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(levels).save(path, format="PNG")
    logger.debug("wrote %s (%dx%d)", path, levels.shape[0], levels.shape[1])
