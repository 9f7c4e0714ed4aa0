# spnet/nn/gradcheck.py
"""Central finite-difference verification of hand-derived gradients."""

import logging
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel, Field

from .layers import softmax_cross_entropy
from .model import SpnetModel

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# gradients smaller than this are compared on an absolute scale
ABS_FLOOR = 1e-4


class GradCheckReport(BaseModel):
    """Worst relative error per parameter tensor"""
    errors: Dict[str, float] = Field(default_factory=dict)
    checked: Dict[str, int] = Field(default_factory=dict)
    max_rel_error: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(
    loss_fn: Callable[[], float],
    array: np.ndarray,
    indices: np.ndarray,
    h: float = DEFAULT_STEP,
) -> np.ndarray:
    """
    Central differences of loss_fn with respect to selected flat entries of array.

    The array is perturbed in place and restored after each probe.
    """
    flat = array.reshape(-1)
    grads = np.zeros(len(indices))
    for n, index in enumerate(indices):
        original = flat[index]
        flat[index] = original + h
        plus = loss_fn()
        flat[index] = original - h
        minus = loss_fn()
        flat[index] = original
        grads[n] = (plus - minus) / (2.0 * h)
    return grads


def grad_check(
    model: SpnetModel,
    image: np.ndarray,
    label: int,
    h: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOLERANCE,
    samples_per_layer: int = 200,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare backpropagated and central-difference gradients of the loss.

    Runs on a float64 copy of the model in inference mode so dropout never
    perturbs the probes. Tensors with fewer entries than samples_per_layer are
    checked exhaustively.
    """
    probe = model.astype(np.float64)
    x = np.asarray(image, dtype=np.float64)
    rng = np.random.default_rng(seed)

    def loss_fn() -> float:
        scores, _ = probe.forward(x, train_mode=False)
        return softmax_cross_entropy(scores[0], label)[0]

    scores, cache = probe.forward(x, train_mode=False)
    _, d_scores = softmax_cross_entropy(scores, [label])
    analytic, _ = probe.backward(cache, d_scores)

    report = GradCheckReport(tolerance=tol)
    for name, param in probe.params.items():
        count = min(param.size, samples_per_layer)
        indices = np.sort(rng.choice(param.size, size=count, replace=False))
        numeric = numeric_gradient(loss_fn, param, indices, h)
        errors = relative_error(analytic[name].reshape(-1)[indices], numeric)
        report.errors[name] = float(errors.max()) if count else 0.0
        report.checked[name] = int(count)
        logger.debug("%s: %d entries, max rel error %.3e", name, count, report.errors[name])

    report.max_rel_error = max(report.errors.values(), default=0.0)
    return report


def input_grad_check(
    forward: Callable[[np.ndarray], np.ndarray],
    backward: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    h: float = DEFAULT_STEP,
    seed: int = 0,
    probes: Optional[int] = None,
) -> float:
    """
    Max relative error of d(sum(r * forward(x)))/dx for a fixed random r.

    `backward` receives the upstream gradient r and returns the input gradient.
    """
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    upstream = rng.standard_normal(np.shape(forward(x)))
    analytic = backward(upstream).reshape(-1)
    count = x.size if probes is None else min(probes, x.size)
    indices = np.sort(rng.choice(x.size, size=count, replace=False))
    numeric = numeric_gradient(lambda: float(np.sum(upstream * forward(x))), x, indices, h)
    return float(relative_error(analytic[indices], numeric).max())
