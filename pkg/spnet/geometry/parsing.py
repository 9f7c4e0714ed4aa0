# spnet/geometry/parsing.py
"""
ASCII OFF and OBJ readers.

Both readers fan-triangulate polygons from their first corner and report
problems with the 1-based line number of the offending record.
"""

import logging
import math
import re
from pathlib import Path
from typing import Iterator, List, Tuple, Union

import numpy as np

from ..exceptions import EmptyMesh, IndexOutOfRange, MalformedFace, MalformedHeader, MalformedVertex, MeshError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

# "OFF", "OFF 8 6 0" and ModelNet's "OFF8 6 0" all announce an OFF file
_OFF_HEADER = re.compile(r"^OFF\s*(.*)$")


def _decode(data: Union[bytes, str]) -> str:
    if isinstance(data, bytes):
        return data.decode("latin-1")
    return data


def _records(text: str) -> Iterator[Tuple[int, List[str]]]:
    """Yield (line number, tokens) for non-empty, non-comment lines"""
    for number, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if tokens:
            yield number, tokens


def fan_triangulate(polygon: List[int]) -> List[Tuple[int, int, int]]:
    """Split a polygon into triangles sharing its first corner"""
    first = polygon[0]
    return [(first, polygon[k], polygon[k + 1]) for k in range(1, len(polygon) - 1)]


def _parse_vertex(tokens: List[str], line: int) -> List[float]:
    try:
        coords = [float(t) for t in tokens[:3]]
    except ValueError:
        raise MalformedVertex(f"Cannot parse vertex '{' '.join(tokens)}'", line=line)
    if not all(math.isfinite(c) for c in coords):
        raise MalformedVertex(f"Non-finite vertex '{' '.join(tokens)}'", line=line)
    return coords


def parse_off(data: Union[bytes, str], object_id: str = "", label: str | None = None) -> TriangleMesh:
    """Parse an ASCII OFF document into a triangle mesh"""
    records = _records(_decode(data))

    first = next(records, None)
    if first is None:
        raise EmptyMesh("Empty OFF document", line=1)
    line, tokens = first
    match = _OFF_HEADER.match(" ".join(tokens))
    if match is None:
        raise MalformedHeader(f"Expected 'OFF' header, got '{' '.join(tokens)}'", line=line)

    counts = match.group(1).split()
    counts_line = line
    if not counts:
        nxt = next(records, None)
        if nxt is None:
            raise MalformedHeader("Missing vertex/face counts", line=line + 1)
        counts_line, counts = nxt
    try:
        num_vertices, num_faces = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise MalformedHeader(f"Cannot parse counts '{' '.join(counts)}'", line=counts_line)
    if num_vertices < 0 or num_faces < 0:
        raise MalformedHeader("Negative element counts", line=counts_line)
    if num_vertices == 0 or num_faces == 0:
        raise EmptyMesh(f"Header declares {num_vertices} vertices and {num_faces} faces", line=counts_line)

    vertices: List[List[float]] = []
    for _ in range(num_vertices):
        nxt = next(records, None)
        if nxt is None:
            raise MalformedHeader(
                f"Header declares {num_vertices} vertices but file ends after {len(vertices)}",
                line=counts_line,
            )
        line, tokens = nxt
        if len(tokens) < 3:
            raise MalformedVertex(f"Vertex needs 3 coordinates, got {len(tokens)}", line=line)
        vertices.append(_parse_vertex(tokens, line))

    triangles: List[Tuple[int, int, int]] = []
    for _ in range(num_faces):
        nxt = next(records, None)
        if nxt is None:
            raise MalformedHeader(
                f"Header declares {num_faces} faces but file ends early",
                line=counts_line,
            )
        line, tokens = nxt
        try:
            arity = int(tokens[0])
            polygon = [int(t) for t in tokens[1:1 + arity]]
        except ValueError:
            raise MalformedFace(f"Cannot parse face '{' '.join(tokens)}'", line=line)
        if arity < 3 or len(polygon) < arity:
            raise MalformedFace(f"Face needs at least 3 vertex indices, got '{' '.join(tokens)}'", line=line)
        for index in polygon:
            if index < 0 or index >= num_vertices:
                raise IndexOutOfRange(f"Vertex index {index} outside [0, {num_vertices})", line=line)
        triangles.extend(fan_triangulate(polygon))

    logger.debug("parsed OFF %s: %d vertices, %d triangles", object_id, len(vertices), len(triangles))
    return TriangleMesh(vertices=np.array(vertices), faces=np.array(triangles), label=label, object_id=object_id)


def _resolve_obj_index(token: str, num_vertices: int, line: int) -> int:
    """OBJ indices are 1-based; negative ones count back from the latest vertex"""
    try:
        raw = int(token.split("/")[0])
    except ValueError:
        raise MalformedFace(f"Cannot parse face index '{token}'", line=line)
    if raw == 0:
        raise MalformedFace("Face index 0 is not valid in OBJ", line=line)
    index = raw - 1 if raw > 0 else num_vertices + raw
    if index < 0 or index >= num_vertices:
        raise IndexOutOfRange(f"Face index {raw} outside the {num_vertices} vertices defined so far", line=line)
    return index


def parse_obj(data: Union[bytes, str], object_id: str = "", label: str | None = None) -> TriangleMesh:
    """Parse an ASCII OBJ document, consuming only v and f records"""
    vertices: List[List[float]] = []
    triangles: List[Tuple[int, int, int]] = []
    last_line = 0

    for line, tokens in _records(_decode(data)):
        last_line = line
        keyword = tokens[0]
        if keyword == "v":
            if len(tokens) < 4:
                raise MalformedVertex(f"Vertex needs 3 coordinates, got {len(tokens) - 1}", line=line)
            vertices.append(_parse_vertex(tokens[1:], line))
        elif keyword == "f":
            if len(tokens) < 4:
                raise MalformedFace(f"Face needs at least 3 vertex indices, got {len(tokens) - 1}", line=line)
            polygon = [_resolve_obj_index(t, len(vertices), line) for t in tokens[1:]]
            triangles.extend(fan_triangulate(polygon))

    if not vertices or not triangles:
        raise EmptyMesh(f"OBJ defines {len(vertices)} vertices and {len(triangles)} faces", line=last_line + 1)

    logger.debug("parsed OBJ %s: %d vertices, %d triangles", object_id, len(vertices), len(triangles))
    return TriangleMesh(vertices=np.array(vertices), faces=np.array(triangles), label=label, object_id=object_id)


def load_mesh(path: Union[str, Path], object_id: str | None = None, label: str | None = None) -> TriangleMesh:
    """Read an OFF or OBJ file, dispatching on the suffix"""
    path = Path(path)
    object_id = object_id if object_id is not None else path.stem
    suffix = path.suffix.lower()
    if suffix == ".off":
        return parse_off(path.read_bytes(), object_id=object_id, label=label)
    if suffix == ".obj":
        return parse_obj(path.read_bytes(), object_id=object_id, label=label)
    raise MeshError(f"Unsupported mesh format '{path.suffix}' for {path}")
