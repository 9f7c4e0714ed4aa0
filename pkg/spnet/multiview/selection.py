# spnet/multiview/selection.py
"""
Learned view selection and view-ensemble training.

Selection keeps the trained backbone frozen: the score of every view of
every training object is computed once, then only the per-view weights of
the weighted-average layer are fitted by SGD. Ensemble training then updates
the backbone (and w* for the weighted average) end to end on the selected
views.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from ..exceptions import ShapeMismatch
from ..nn.layers import softmax_cross_entropy
from ..nn.model import SpnetModel
from ..nn.training import TrainingLog, accuracy, iterate_minibatches, sgd_step
from ..state_management import Aggregation, EpochRecord, Split, TrainConfig
from .ensemble import EnsembleModel, aggregate, aggregate_backward
from .views import ViewBank, rank_views

logger = logging.getLogger(__name__)


def view_scores(backbone: SpnetModel, views: np.ndarray) -> np.ndarray:
    """N x C inference scores, row j from view j"""
    views = np.asarray(views)
    if views.ndim == 3:
        views = views[:, None]
    return backbone.predict(views)


def collect_view_scores(backbone: SpnetModel, dataset: Sequence[np.ndarray]) -> np.ndarray:
    """(B, N, C) scores for a sequence of per-object view stacks, loaded one object at a time"""
    rows = [view_scores(backbone, dataset[i]) for i in range(len(dataset))]
    if not rows:
        raise ShapeMismatch("View selection needs at least one training object")
    return np.stack(rows).astype(np.float64)


def fit_view_weights(
    scores: np.ndarray,
    labels: Sequence[int],
    epochs: int,
    learning_rate: float,
    batch_size: int = 16,
    seed: int = 0,
    log: Optional[TrainingLog] = None,
) -> np.ndarray:
    """SGD on w for the weighted-average prediction over precomputed (B, N, C) scores, w initialised to 1/N"""
    labels = np.asarray(labels, dtype=np.int64)
    b, n, _ = scores.shape
    weights = np.full(n, 1.0 / n)
    rng = np.random.default_rng(seed)
    for epoch in range(1, epochs + 1):
        total = 0.0
        for batch in iterate_minibatches(b, batch_size, rng):
            combined = aggregate(scores[batch], Aggregation.WEIGHTED_AVERAGE, weights)
            loss, d_combined = softmax_cross_entropy(combined, labels[batch])
            _, d_weights = aggregate_backward(d_combined, scores[batch], Aggregation.WEIGHTED_AVERAGE, weights)
            weights = weights - learning_rate * d_weights
            total += loss * len(batch)
        if log is not None:
            combined = aggregate(scores, Aggregation.WEIGHTED_AVERAGE, weights)
            log.append(EpochRecord(epoch=epoch, split=Split.TRAIN, loss=total / b, accuracy=accuracy(combined, labels)))
    return weights


def train_view_selection(
    backbone: SpnetModel,
    dataset: Sequence[np.ndarray],
    labels: Sequence[int],
    bank: ViewBank,
    epochs: int = 50,
    learning_rate: float = 0.01,
    batch_size: int = 16,
    seed: int = 0,
    log: Optional[TrainingLog] = None,
) -> ViewBank:
    """
    Learn one weight per view with the backbone frozen.

    Args:
        backbone: trained view classifier, left untouched
        dataset: per-object (N, H, W) or (N, 1, H, W) view stacks in bank order
        labels: class id per object
        bank: rotation set; its weights are replaced

    Returns:
        ViewBank carrying the learned weights and no selection yet
    """
    scores = collect_view_scores(backbone, dataset)
    if scores.shape[1] != bank.num_views:
        raise ShapeMismatch(f"Dataset has {scores.shape[1]} views per object, bank has {bank.num_views}")
    weights = fit_view_weights(scores, labels, epochs, learning_rate, batch_size, seed, log)
    logger.info("view selection: strongest views %s", rank_views(weights)[:8])
    return bank.with_weights(weights.astype(np.float32))


def select_top(bank: ViewBank, m: int) -> List[int]:
    """Indices of the m largest |w|, ties to the lower index"""
    return bank.with_selection(m).selected


def train_ensemble(
    backbone: SpnetModel,
    views: np.ndarray,
    labels: Sequence[int],
    view_indices: Sequence[int],
    aggregation: Aggregation,
    config: TrainConfig,
    from_scratch: bool = False,
    log: Optional[TrainingLog] = None,
    test_views: Optional[np.ndarray] = None,
    test_labels: Optional[Sequence[int]] = None,
) -> EnsembleModel:
    """
    Train backbone and view weights on aggregated predictions of the selected views.

    Args:
        backbone: selection-stage backbone, fine-tuned on a copy unless from_scratch
        views: (B, M, H, W) or (B, M, 1, H, W) stacks of the selected views
        labels: class id per object
        view_indices: bank indices of the M views, stored on the ensemble
        aggregation: reduction over views; only weighted_average learns w*
        config: SGD settings
        from_scratch: start from a fresh initialization instead of the backbone

    Returns:
        EnsembleModel with w* initialised to 1/M before training
    """
    labels = np.asarray(labels, dtype=np.int64)
    views = np.asarray(views, dtype=np.float32)
    if views.ndim == 4:
        views = views[:, :, None]
    b, m = views.shape[:2]
    if m != len(view_indices):
        raise ShapeMismatch(f"{m} views per object but {len(view_indices)} view indices")

    if from_scratch:
        model = SpnetModel.initialize(
            backbone.num_classes,
            seed=config.seed,
            hidden_units=config.hidden_units,
            dropout_rate=config.dropout_rate,
        )
    else:
        model = backbone.copy()
    model.dropout_rate = config.dropout_rate
    ensemble = EnsembleModel(model, view_indices, aggregation)
    log = log if log is not None else TrainingLog()
    rng = np.random.default_rng(config.seed)
    learns_weights = aggregation == Aggregation.WEIGHTED_AVERAGE

    for epoch in range(1, config.epochs + 1):
        total_loss, correct = 0.0, 0
        for batch in iterate_minibatches(b, config.batch_size, rng):
            flat = views[batch].reshape((len(batch) * m,) + views.shape[2:])
            scores, cache = model.forward(flat, train_mode=True, rng=rng)
            per_view = scores.reshape(len(batch), m, -1)
            combined = aggregate(per_view, aggregation, ensemble.view_weights)
            loss, d_combined = softmax_cross_entropy(combined, labels[batch])
            d_views, d_weights = aggregate_backward(d_combined, per_view, aggregation, ensemble.view_weights)
            grads, _ = model.backward(cache, d_views.reshape(len(batch) * m, -1))
            sgd_step(model, grads, config.learning_rate)
            if learns_weights:
                ensemble.view_weights -= (config.learning_rate * d_weights).astype(np.float32)
            total_loss += loss * len(batch)
            correct += int(np.sum(np.argmax(combined, axis=1) == labels[batch]))

        log.append(EpochRecord(epoch=epoch, split=Split.TRAIN, loss=total_loss / b, accuracy=correct / b))
        if test_views is not None and test_labels is not None and len(test_labels):
            test_scores = ensemble.predict(test_views)
            test_loss, _ = softmax_cross_entropy(test_scores.astype(np.float64), test_labels)
            log.append(EpochRecord(epoch=epoch, split=Split.TEST, loss=test_loss, accuracy=accuracy(test_scores, test_labels)))
        if epoch == 1 or epoch % 10 == 0 or epoch == config.epochs:
            logger.info("ensemble epoch %d/%d: loss=%.4f train_acc=%.3f", epoch, config.epochs, total_loss / b, correct / b)

    return ensemble
