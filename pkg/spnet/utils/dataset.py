# spnet/utils/dataset.py
"""
Dataset manifests and the on-disk view archive.

A manifest is a CSV with columns object_id, mesh_path, class_label, split;
mesh paths are resolved relative to the manifest file. Rendered views live
at <out>/views/<object_id>/viewNN.spdi.
"""

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Iterable, List, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..exceptions import ManifestError, StageDependency
from ..state_management import Manifest, ManifestRecord
from .cache_manager import view_cache

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["object_id", "mesh_path", "class_label", "split"]


def load_manifest(path: Union[str, Path], check_paths: bool = True) -> Manifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Manifest {path} does not exist")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e

    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise ManifestError(f"Manifest {path} lacks columns {missing}")

    frame = frame[MANIFEST_COLUMNS].apply(lambda column: column.str.strip())
    frame["mesh_path"] = [str((path.parent / p).resolve()) if p else p for p in frame["mesh_path"]]
    try:
        manifest = Manifest(records=frame.to_dict(orient="records"))
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ManifestError(f"Invalid manifest {path}: {problems}") from e

    if check_paths:
        absent = [r.object_id for r in manifest.records if not r.mesh_path.is_file()]
        if absent:
            raise ManifestError(f"Mesh files missing for {len(absent)} objects, first: {absent[0]}")
    logger.info("loaded manifest %s: %d objects, %d classes", path, len(manifest.records), len(manifest.classes))
    return manifest


def write_manifest(records: Iterable[ManifestRecord], path: Union[str, Path]) -> Path:
    """Write records with mesh paths relative to the manifest's directory"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for record in records:
        mesh_path = Path(record.mesh_path)
        try:
            mesh_path = mesh_path.relative_to(path.parent)
        except ValueError:
            pass
        rows.append({
            "object_id": record.object_id,
            "mesh_path": mesh_path.as_posix(),
            "class_label": record.class_label,
            "split": record.split.value,
        })
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, index=False, lineterminator="\n")
    return path

# ================================
# VIEW ARCHIVE
# ================================

def view_path(out: Union[str, Path], object_id: str, index: int) -> Path:
    return Path(out) / "views" / object_id / f"view{index:02d}.spdi"


class ViewArchive(Sequence):
    """
    Lazy per-object view stacks read from <out>/views.

    Item i is a float32 (V, H, W) array holding the requested view indices of
    object i, so a whole split never has to sit in memory at once.
    """

    def __init__(self, out: Union[str, Path], object_ids: List[str], indices: List[int], image_size: int = 0):
        self.out = Path(out)
        self.object_ids = list(object_ids)
        self.indices = list(indices)
        # side of the (0, V, S, S) stack returned for an empty split
        self.image_size = image_size

    def __len__(self) -> int:
        return len(self.object_ids)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return ViewArchive(self.out, self.object_ids[i], self.indices, self.image_size)
        object_id = self.object_ids[i]
        images = []
        for index in self.indices:
            path = view_path(self.out, object_id, index)
            if not path.exists():
                raise StageDependency(f"View {index} of '{object_id}' has not been rendered ({path})")
            images.append(view_cache.load(path, source_id=object_id).pixels)
        return np.stack(images)

    def stack(self) -> np.ndarray:
        """(B, V, H, W) array of every object"""
        if not self.object_ids:
            return np.zeros((0, len(self.indices), self.image_size, self.image_size), dtype=np.float32)
        return np.stack([self[i] for i in range(len(self))])
