# spnet/nn/training.py
"""
Plain minibatch SGD for the view classifier, classification metrics and the
line-delimited training log.
"""

import logging
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
from sklearn.metrics import confusion_matrix

from ..state_management import ClassificationMetrics, EpochRecord, Split, TrainConfig
from .layers import softmax_cross_entropy
from .model import SpnetModel

logger = logging.getLogger(__name__)


def sgd_step(model: SpnetModel, grads: Dict[str, np.ndarray], lr: float) -> SpnetModel:
    """w <- w - lr * g for every parameter, in place"""
    for name, param in model.params.items():
        param -= (lr * grads[name]).astype(param.dtype)
    return model


def iterate_minibatches(count: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled index batches covering [0, count) once"""
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]

# ================================
# METRICS
# ================================

def accuracy(scores: np.ndarray, labels: Sequence[int]) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(scores, axis=1) == labels))


def binary_accuracy(scores: np.ndarray, labels: Sequence[int]) -> float:
    """Agreement of one-hot predictions with one-hot labels, averaged over samples and classes"""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    num_classes = scores.shape[1]
    predicted = np.eye(num_classes, dtype=bool)[np.argmax(scores, axis=1)]
    truth = np.eye(num_classes, dtype=bool)[labels]
    return float(np.mean(predicted == truth))


def classification_metrics(scores: np.ndarray, labels: Sequence[int], classes: Sequence[str]) -> ClassificationMetrics:
    labels = np.asarray(labels, dtype=np.int64)
    predicted = np.argmax(scores, axis=1) if len(labels) else np.zeros(0, dtype=np.int64)
    matrix = confusion_matrix(labels, predicted, labels=list(range(len(classes))))
    per_class = {}
    for k, name in enumerate(classes):
        total = int(matrix[k].sum())
        if total:
            per_class[name] = float(matrix[k, k] / total)
    return ClassificationMetrics(
        accuracy=accuracy(scores, labels),
        binary_accuracy=binary_accuracy(scores, labels),
        per_class_accuracy=per_class,
        confusion_matrix=matrix.tolist(),
        num_samples=len(labels),
    )

# ================================
# TRAINING LOG
# ================================

class TrainingLog:
    """Appends EpochRecords as JSON lines; the file is truncated when the log is opened"""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.records: List[EpochRecord] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a") as f:
                f.write(record.model_dump_json() + "\n")


def read_training_log(path: Union[str, Path]) -> List[EpochRecord]:
    lines = Path(path).read_text().splitlines()
    return [EpochRecord.model_validate_json(line) for line in lines if line.strip()]

# ================================
# TRAINER
# ================================

def evaluate(model: SpnetModel, images: np.ndarray, labels: Sequence[int]) -> tuple[float, float]:
    """(mean loss, accuracy) in inference mode"""
    scores = model.predict(images)
    loss, _ = softmax_cross_entropy(scores.astype(np.float64), labels)
    return loss, accuracy(scores, labels)


def train_model(
    model: SpnetModel,
    images: np.ndarray,
    labels: Sequence[int],
    config: TrainConfig,
    log: Optional[TrainingLog] = None,
    test_images: Optional[np.ndarray] = None,
    test_labels: Optional[Sequence[int]] = None,
) -> SpnetModel:
    """
    Minibatch SGD on (images, labels).

    Shuffling and dropout draw from one generator seeded with config.seed, so
    equal seeds and data give bit-identical trajectories. The model is
    updated in place and returned.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    log = log if log is not None else TrainingLog()
    rng = np.random.default_rng(config.seed)
    model.dropout_rate = config.dropout_rate

    for epoch in range(1, config.epochs + 1):
        total_loss, correct = 0.0, 0
        for batch in iterate_minibatches(len(labels), config.batch_size, rng):
            scores, cache = model.forward(images[batch], train_mode=True, rng=rng)
            loss, d_scores = softmax_cross_entropy(scores, labels[batch])
            grads, _ = model.backward(cache, d_scores)
            sgd_step(model, grads, config.learning_rate)
            total_loss += loss * len(batch)
            correct += int(np.sum(np.argmax(scores, axis=1) == labels[batch]))

        train_loss = total_loss / max(len(labels), 1)
        train_acc = correct / max(len(labels), 1)
        log.append(EpochRecord(epoch=epoch, split=Split.TRAIN, loss=train_loss, accuracy=train_acc))

        if test_images is not None and test_labels is not None and len(test_labels):
            test_loss, test_acc = evaluate(model, test_images, test_labels)
            log.append(EpochRecord(epoch=epoch, split=Split.TEST, loss=test_loss, accuracy=test_acc))

        if epoch == 1 or epoch % 10 == 0 or epoch == config.epochs:
            logger.info("epoch %d/%d: loss=%.4f train_acc=%.3f", epoch, config.epochs, train_loss, train_acc)

        if config.stop_at_perfect and evaluate(model, images, labels)[1] >= 1.0:
            logger.info("training accuracy reached 1.0 after %d epochs", epoch)
            break

    return model
