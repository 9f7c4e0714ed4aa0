# spnet/retrieval/ranking.py
"""Shape descriptors and distance ranking."""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.spatial.distance import cdist

from ..multiview.ensemble import EnsembleModel
from ..nn.layers import softmax
from ..state_management import DistanceMetric

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-9

_CDIST_METRICS = {
    DistanceMetric.L1: "cityblock",
    DistanceMetric.L2: "euclidean",
}


class Descriptor(BaseModel):
    """Softmax of an object's aggregated ensemble scores"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    object_id: str
    probs: np.ndarray
    label: Optional[str] = None

    @field_validator("probs", mode="before")
    @classmethod
    def validate_probs(cls, v) -> np.ndarray:
        probs = np.array(v, dtype=np.float64, copy=True).reshape(-1)
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError("Descriptor must lie on the probability simplex")
        probs.flags.writeable = False
        return probs


class RankedList(BaseModel):
    """Corpus ids ordered by ascending distance to one query"""
    query_id: str
    ranked: List[str] = Field(default_factory=list)
    distances: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_order(self) -> "RankedList":
        if len(self.ranked) != len(self.distances):
            raise ValueError("ranked and distances differ in length")
        if any(b < a for a, b in zip(self.distances, self.distances[1:])):
            raise ValueError("distances must be non-decreasing")
        return self


def descriptor(ensemble: EnsembleModel, views: np.ndarray, object_id: str = "", label: Optional[str] = None) -> Descriptor:
    """Descriptor from one object's (M, H, W) stack of selected views"""
    scores = ensemble.predict(np.asarray(views)[None])[0]
    return Descriptor(object_id=object_id, probs=softmax(scores.astype(np.float64)), label=label)


def descriptor_matrix(descriptors: Sequence[Descriptor]) -> np.ndarray:
    return np.stack([d.probs for d in descriptors]) if descriptors else np.zeros((0, 0))


def pairwise_distances(a: np.ndarray, b: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    return cdist(np.atleast_2d(a), np.atleast_2d(b), _CDIST_METRICS[metric])


def distance(a, b, metric: DistanceMetric = DistanceMetric.L1) -> float:
    """L1 (sum of absolute differences) or L2 (Euclidean) distance"""
    a = np.asarray(a.probs if isinstance(a, Descriptor) else a, dtype=np.float64)
    b = np.asarray(b.probs if isinstance(b, Descriptor) else b, dtype=np.float64)
    return float(pairwise_distances(a, b, metric)[0, 0])


def _ranked_list(query_id: str, ids: Sequence[str], row: np.ndarray) -> RankedList:
    keep = [k for k in range(len(ids)) if ids[k] != query_id]
    keep.sort(key=lambda k: (row[k], ids[k]))
    return RankedList(query_id=query_id, ranked=[ids[k] for k in keep], distances=[float(row[k]) for k in keep])


def rank(query: Descriptor, corpus: Sequence[Descriptor], metric: DistanceMetric = DistanceMetric.L1) -> RankedList:
    """Corpus sorted by ascending distance, ties by id; the query itself is excluded"""
    if not corpus:
        return RankedList(query_id=query.object_id)
    row = pairwise_distances(query.probs, descriptor_matrix(corpus), metric)[0]
    return _ranked_list(query.object_id, [d.object_id for d in corpus], row)


def rank_all(descriptors: Sequence[Descriptor], metric: DistanceMetric = DistanceMetric.L1) -> List[RankedList]:
    """Rank every descriptor against all the others"""
    if not descriptors:
        return []
    matrix = descriptor_matrix(descriptors)
    distances = pairwise_distances(matrix, matrix, metric)
    ids = [d.object_id for d in descriptors]
    return [_ranked_list(ids[q], ids, distances[q]) for q in range(len(ids))]
