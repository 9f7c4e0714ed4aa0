# spnet/multiview/ensemble.py
"""
View ensemble: a shared backbone scores every selected view and the scores
are reduced over the view axis by max, mean or a learned weighted sum.

The mean is evaluated as the weighted sum with uniform weights 1/M, in a
fixed view order, so uniform weighted averaging reproduces it bit for bit.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import EmptyViews, ShapeMismatch
from ..state_management import Aggregation
from ..nn.model import SpnetModel

logger = logging.getLogger(__name__)


def _weighted_sum(scores: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_j w_j * scores[..., j, :] accumulated in view order"""
    out = weights[0] * scores[..., 0, :]
    for j in range(1, scores.shape[-2]):
        out = out + weights[j] * scores[..., j, :]
    return out


def _check(scores: np.ndarray, aggregation: Aggregation, weights: Optional[np.ndarray]) -> None:
    if scores.ndim not in (2, 3):
        raise ShapeMismatch(f"Expected M x C or B x M x C scores, got shape {scores.shape}")
    if scores.shape[-2] == 0:
        raise EmptyViews("Cannot aggregate zero views")
    if aggregation == Aggregation.WEIGHTED_AVERAGE:
        if weights is None or np.shape(weights) != (scores.shape[-2],):
            raise ShapeMismatch(f"Weighted average needs {scores.shape[-2]} view weights, got {np.shape(weights)}")


def aggregate(scores: np.ndarray, aggregation: Aggregation, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Reduce view scores over the view axis.

    Args:
        scores: (M, C) for one object or (B, M, C) for a batch
        aggregation: max_pool, avg_pool or weighted_average
        weights: (M,) view weights, only read by weighted_average

    Returns:
        (C,) or (B, C) aggregated scores
    """
    scores = np.asarray(scores)
    _check(scores, aggregation, weights)
    m = scores.shape[-2]
    if aggregation == Aggregation.MAX_POOL:
        return scores.max(axis=-2)
    if aggregation == Aggregation.AVG_POOL:
        return _weighted_sum(scores, np.full(m, 1.0 / m, dtype=scores.dtype))
    return _weighted_sum(scores, np.asarray(weights, dtype=scores.dtype))


def aggregate_backward(
    d_out: np.ndarray,
    scores: np.ndarray,
    aggregation: Aggregation,
    weights: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Gradients of the aggregation.

    Returns:
        d_scores with the shape of scores, and d_weights (None unless weighted)
    """
    scores = np.asarray(scores)
    _check(scores, aggregation, weights)
    d_out = np.asarray(d_out)
    m = scores.shape[-2]

    if aggregation == Aggregation.MAX_POOL:
        # route each class gradient to the first view attaining the maximum
        winner = scores.argmax(axis=-2)
        one_hot = np.arange(m).reshape((m, 1)) == winner[..., None, :]
        return one_hot * d_out[..., None, :], None

    if aggregation == Aggregation.AVG_POOL:
        w = np.full(m, 1.0 / m, dtype=scores.dtype)
        return w[:, None] * d_out[..., None, :], None

    w = np.asarray(weights)
    d_scores = w[:, None] * d_out[..., None, :]
    d_weights = np.sum(scores * d_out[..., None, :], axis=-1)
    if d_weights.ndim == 2:
        d_weights = d_weights.sum(axis=0)
    return d_scores, d_weights


class EnsembleModel:
    """Shared backbone, aggregation rule and the view weights w* of the selected views"""

    def __init__(
        self,
        backbone: SpnetModel,
        view_indices: Sequence[int],
        aggregation: Aggregation = Aggregation.WEIGHTED_AVERAGE,
        view_weights: Optional[np.ndarray] = None,
    ):
        if len(view_indices) == 0:
            raise EmptyViews("An ensemble needs at least one view")
        m = len(view_indices)
        self.backbone = backbone
        self.view_indices: List[int] = [int(j) for j in view_indices]
        self.aggregation = aggregation
        if view_weights is None:
            view_weights = np.full(m, 1.0 / m)
        self.view_weights = np.array(view_weights, dtype=np.float32).reshape(-1)
        if len(self.view_weights) != m:
            raise ShapeMismatch(f"{len(self.view_weights)} view weights for {m} views")

    @property
    def num_views(self) -> int:
        return len(self.view_indices)

    def view_scores(self, views: np.ndarray) -> np.ndarray:
        """(B, M, C) backbone scores for a (B, M, 1, H, W) or (B, M, H, W) stack"""
        views = np.asarray(views)
        b, m = views.shape[:2]
        if m != self.num_views:
            raise ShapeMismatch(f"Ensemble expects {self.num_views} views per object, got {m}")
        flat = views.reshape((b * m, 1) + views.shape[-2:])
        return self.backbone.predict(flat).reshape(b, m, -1)

    def predict(self, views: np.ndarray) -> np.ndarray:
        """(B, C) aggregated pre-tanh scores"""
        return aggregate(self.view_scores(views), self.aggregation, self.view_weights)

    def output(self, views: np.ndarray) -> np.ndarray:
        return SpnetModel.output(self.predict(views))
