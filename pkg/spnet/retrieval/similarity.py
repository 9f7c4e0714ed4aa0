# spnet/retrieval/similarity.py
"""Pairwise descriptor distance matrix grouped by class, with SPDI and heatmap exports."""

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns
from pydantic import BaseModel, ConfigDict

from ..projection.codec import encode_grid
from ..state_management import DistanceMetric
from .ranking import Descriptor, descriptor_matrix, pairwise_distances

logger = logging.getLogger(__name__)


class SimilarityMatrix(BaseModel):
    """Distances between every pair of objects, rows and columns sorted by (label, id)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    object_ids: List[str]
    labels: List[str]
    distances: np.ndarray
    metric: DistanceMetric


def similarity_matrix(descriptors: Sequence[Descriptor], metric: DistanceMetric = DistanceMetric.L1) -> SimilarityMatrix:
    ordered = sorted(descriptors, key=lambda d: (d.label or "", d.object_id))
    matrix = descriptor_matrix(ordered)
    distances = pairwise_distances(matrix, matrix, metric) if ordered else np.zeros((0, 0))
    return SimilarityMatrix(
        object_ids=[d.object_id for d in ordered],
        labels=[d.label or "" for d in ordered],
        distances=distances,
        metric=metric,
    )


def block_means(similarity: SimilarityMatrix) -> Tuple[float, float]:
    """(mean within-class, mean between-class) distance, excluding the diagonal"""
    labels = np.asarray(similarity.labels)
    same = labels[:, None] == labels[None, :]
    off_diagonal = ~np.eye(len(labels), dtype=bool)
    within = similarity.distances[same & off_diagonal]
    between = similarity.distances[~same]
    return (
        float(within.mean()) if within.size else 0.0,
        float(between.mean()) if between.size else 0.0,
    )


def scaled(similarity: SimilarityMatrix) -> np.ndarray:
    """Distances divided by their maximum, into [0, 1]"""
    peak = float(similarity.distances.max()) if similarity.distances.size else 0.0
    return similarity.distances / peak if peak > 0 else np.zeros_like(similarity.distances)


def export_similarity(similarity: SimilarityMatrix, out_dir: Union[str, Path], stem: str = "similarity") -> Tuple[Path, Path]:
    """Write <stem>.spdi (grid kind) and a <stem>.png heatmap; returns both paths"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid_path = out_dir / f"{stem}.spdi"
    grid_path.write_bytes(encode_grid(scaled(similarity)))

    size = max(4.0, min(16.0, 0.15 * len(similarity.object_ids)))
    fig, ax = plt.subplots(figsize=(size, size))
    sns.heatmap(
        similarity.distances,
        ax=ax,
        cmap="viridis_r",
        square=True,
        xticklabels=similarity.labels,
        yticklabels=similarity.labels,
        cbar_kws={"label": f"{similarity.metric.value} distance"},
    )
    ax.set_title("Pairwise descriptor distance")
    png_path = out_dir / f"{stem}.png"
    fig.savefig(png_path, dpi=100, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    logger.info("wrote %s and %s", grid_path, png_path)
    return grid_path, png_path
