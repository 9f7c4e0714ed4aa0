# spnet/nn/checkpoint.py
"""
SPNW checkpoint codec.

Layout (little-endian):
    "SPNW", u16 version, u16 num_classes, u16 layer count
    per layer: u16 name length, UTF-8 name, u8 ndim, u32 extents, f32 data
    optional "SPVB": u16 N, u16 M, f32 w[N], u16 selected[M], f64 (azimuth, elevation)[N]
    optional "SPEN": u8 aggregation, u16 M, f32 w*[M], u16 view indices[M]
"""

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..exceptions import FormatError, ShapeMismatch
from ..geometry.mesh import Rotation
from ..multiview.ensemble import EnsembleModel
from ..multiview.views import ViewBank
from ..state_management import Aggregation
from .model import SpnetModel

logger = logging.getLogger(__name__)

MAGIC = b"SPNW"
VERSION = 1
BANK_TAG = b"SPVB"
ENSEMBLE_TAG = b"SPEN"

_AGGREGATIONS = list(Aggregation)


class Checkpoint(BaseModel):
    """Decoded checkpoint: backbone plus the optional view bank and ensemble head"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: SpnetModel
    bank: Optional[ViewBank] = None
    ensemble: Optional[EnsembleModel] = None


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str) -> Tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError(f"Checkpoint truncated at byte {self.offset}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.data):
            raise FormatError(f"Checkpoint truncated at byte {self.offset}")
        values = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset).copy()
        self.offset += size
        return values

    @property
    def done(self) -> bool:
        return self.offset >= len(self.data)


def encode_checkpoint(
    model: SpnetModel,
    bank: Optional[ViewBank] = None,
    ensemble: Optional[EnsembleModel] = None,
) -> bytes:
    parts = [struct.pack("<4sHHH", MAGIC, VERSION, model.num_classes, len(model.params))]
    for name, param in model.params.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack(f"<H{len(encoded)}sB", len(encoded), encoded, param.ndim))
        parts.append(struct.pack(f"<{param.ndim}I", *param.shape))
        parts.append(np.ascontiguousarray(param, dtype="<f4").tobytes())

    if bank is not None:
        parts.append(struct.pack("<4sHH", BANK_TAG, bank.num_views, len(bank.selected)))
        parts.append(np.asarray(bank.weights, dtype="<f4").tobytes())
        parts.append(np.asarray(bank.selected, dtype="<u2").tobytes())
        angles = [(r.azimuth, r.elevation) for r in bank.rotations]
        parts.append(np.asarray(angles, dtype="<f8").reshape(-1).tobytes())

    if ensemble is not None:
        parts.append(struct.pack("<4sBH", ENSEMBLE_TAG, _AGGREGATIONS.index(ensemble.aggregation), ensemble.num_views))
        parts.append(np.asarray(ensemble.view_weights, dtype="<f4").tobytes())
        parts.append(np.asarray(ensemble.view_indices, dtype="<u2").tobytes())

    return b"".join(parts)


def decode_checkpoint(data: bytes, dropout_rate: float = 0.2) -> Checkpoint:
    reader = _Reader(data)
    magic, version, num_classes, layer_count = reader.take("<4sHHH")
    if magic != MAGIC:
        raise FormatError(f"Bad SPNW magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"Unsupported SPNW version {version}")

    params = OrderedDict()
    for _ in range(layer_count):
        (name_length,) = reader.take("<H")
        (raw_name,) = reader.take(f"<{name_length}s")
        (ndim,) = reader.take("<B")
        shape = reader.take(f"<{ndim}I")
        values = reader.array("<f4", int(np.prod(shape)) if ndim else 1)
        params[raw_name.decode("utf-8")] = values.astype(np.float32).reshape(shape)

    try:
        model = SpnetModel(params, dropout_rate=dropout_rate)
    except ShapeMismatch as e:
        raise FormatError(f"Checkpoint layers do not form a valid model: {e}") from e
    if model.num_classes != num_classes:
        raise FormatError(f"Header declares {num_classes} classes, fc2 has {model.num_classes}")

    bank, ensemble = None, None
    while not reader.done:
        (tag,) = reader.take("<4s")
        if tag == BANK_TAG:
            n, m = reader.take("<HH")
            weights = reader.array("<f4", n)
            selected = reader.array("<u2", m)
            angles = reader.array("<f8", 2 * n).reshape(n, 2)
            rotations = [Rotation(azimuth=float(a), elevation=float(e)) for a, e in angles]
            bank = ViewBank(rotations=rotations, weights=weights, selected=[int(j) for j in selected])
        elif tag == ENSEMBLE_TAG:
            code, m = reader.take("<BH")
            if code >= len(_AGGREGATIONS):
                raise FormatError(f"Unknown aggregation code {code}")
            weights = reader.array("<f4", m)
            indices = reader.array("<u2", m)
            ensemble = EnsembleModel(model, [int(j) for j in indices], _AGGREGATIONS[code], weights)
        else:
            raise FormatError(f"Unknown checkpoint section {tag!r}")

    return Checkpoint(model=model, bank=bank, ensemble=ensemble)


def save_checkpoint(
    path: Union[str, Path],
    model: SpnetModel,
    bank: Optional[ViewBank] = None,
    ensemble: Optional[EnsembleModel] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model, bank, ensemble))
    logger.debug("wrote checkpoint %s", path)


def load_checkpoint(path: Union[str, Path], dropout_rate: float = 0.2) -> Checkpoint:
    path = Path(path)
    try:
        return decode_checkpoint(path.read_bytes(), dropout_rate=dropout_rate)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e
