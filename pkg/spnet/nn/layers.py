# spnet/nn/layers.py
"""
Forward and backward kernels for the layers of the shallow CNN.

All spatial layers work on batched NCHW arrays. Every forward returns the
output together with whatever the matching backward needs; backward kernels
take the upstream gradient first.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from ..exceptions import NonFiniteTensor, OddSpatialDim, ShapeMismatch

logger = logging.getLogger(__name__)

Tensor = NDArray[np.floating]


def check_finite(name: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NonFiniteTensor(f"{name} produced NaN or Inf")
    return array


def as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    """Promote a single C x H x W sample to a batch of one"""
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeMismatch(f"Expected C x H x W or N x C x H x W, got shape {x.shape}")
    return x, False

# ================================
# CONVOLUTION
# ================================

def _windows(x: np.ndarray) -> np.ndarray:
    """3x3 neighbourhoods of a zero-padded NCHW batch: (N, C, H, W, 3, 3)"""
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(padded, (3, 3), axis=(2, 3))


def conv3x3_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tuple[Tensor, Tuple]:
    """
    Cross-correlation with a 3x3 kernel, zero padding 1 and stride 1.

    Args:
        x: (N, C_in, H, W) batch, or a single (C_in, H, W) sample
        weight: (C_out, C_in, 3, 3)
        bias: (C_out,)

    Returns:
        output of shape (N, C_out, H, W) (or (C_out, H, W)) and the backward cache
    """
    batch, single = as_batch(x)
    if weight.ndim != 4 or weight.shape[2:] != (3, 3) or weight.shape[1] != batch.shape[1]:
        raise ShapeMismatch(f"Kernel {weight.shape} does not fit input with {batch.shape[1]} channels")
    if bias.shape != (weight.shape[0],):
        raise ShapeMismatch(f"Bias {bias.shape} does not match {weight.shape[0]} output channels")

    windows = _windows(batch)
    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))  # (N, H, W, C_out)
    out = np.moveaxis(out, 3, 1) + bias[None, :, None, None]
    out = np.ascontiguousarray(out)
    return (out[0] if single else out), (windows, weight, single)


def conv3x3_backward(d_out: Tensor, cache: Tuple) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (d_input, d_weight, d_bias)"""
    windows, weight, single = cache
    d_batch = d_out[None] if single else d_out
    d_weight = np.tensordot(d_batch, windows, axes=([0, 2, 3], [0, 2, 3]))
    d_bias = d_batch.sum(axis=(0, 2, 3))
    flipped = weight[:, :, ::-1, ::-1]
    d_input = np.tensordot(_windows(d_batch), flipped, axes=([1, 4, 5], [0, 2, 3]))
    d_input = np.ascontiguousarray(np.moveaxis(d_input, 3, 1))
    return (d_input[0] if single else d_input), d_weight, d_bias

# ================================
# POOLING
# ================================

def maxpool2x2_forward(x: Tensor) -> Tuple[Tensor, Tuple]:
    """2x2 max pooling with stride 2; the cache records the first arg-max of every block"""
    batch, single = as_batch(x)
    n, c, h, w = batch.shape
    if h % 2 or w % 2:
        raise OddSpatialDim(f"2x2 pooling needs even extents, got {h} x {w}")
    blocks = batch.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
    return (out[0] if single else out), (argmax, batch.shape, single)


def maxpool2x2_backward(d_out: Tensor, cache: Tuple) -> Tensor:
    argmax, shape, single = cache
    n, c, h, w = shape
    d_batch = d_out[None] if single else d_out
    d_blocks = np.zeros((n, c, h // 2, w // 2, 4), dtype=d_batch.dtype)
    np.put_along_axis(d_blocks, argmax[..., None], d_batch[..., None], axis=-1)
    d_input = d_blocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return d_input[0] if single else d_input


def global_avg_pool_forward(x: Tensor) -> Tuple[Tensor, Tuple]:
    """Per-channel spatial mean: (N, C, H, W) -> (N, C)"""
    batch, single = as_batch(x)
    out = batch.mean(axis=(2, 3))
    return (out[0] if single else out), (batch.shape, single)


def global_avg_pool_backward(d_out: Tensor, cache: Tuple) -> Tensor:
    shape, single = cache
    n, c, h, w = shape
    d_batch = d_out[None] if single else d_out
    d_input = np.broadcast_to((d_batch / (h * w))[:, :, None, None], shape).copy()
    return d_input[0] if single else d_input

# ================================
# ELEMENTWISE AND DENSE
# ================================

def tanh_forward(x: Tensor) -> Tuple[Tensor, Tensor]:
    out = np.tanh(x)
    return out, out


def tanh_backward(d_out: Tensor, out: Tensor) -> Tensor:
    return d_out * (1.0 - out * out)


def dropout_forward(
    x: Tensor,
    rate: float,
    train_mode: bool,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Optional[Tensor]]:
    """Inverted dropout; identity (and no mask) outside training"""
    if not train_mode or rate <= 0.0:
        return x, None
    if rng is None:
        raise ValueError("Dropout in training mode needs a random generator")
    keep = rng.random(x.shape) >= rate
    mask = (keep / (1.0 - rate)).astype(x.dtype)
    return x * mask, mask


def dropout_backward(d_out: Tensor, mask: Optional[Tensor]) -> Tensor:
    return d_out if mask is None else d_out * mask


def dense_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tuple[Tensor, Tensor]:
    """x (N, D) @ weight (D, K) + bias (K,)"""
    if x.ndim != 2 or weight.shape[0] != x.shape[1] or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"Dense layer {weight.shape} cannot take input {x.shape}")
    return x @ weight + bias, x


def dense_backward(d_out: Tensor, x: Tensor, weight: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (d_input, d_weight, d_bias)"""
    return d_out @ weight.T, x.T @ d_out, d_out.sum(axis=0)

# ================================
# LOSS
# ================================

def softmax(scores: Tensor) -> Tensor:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(scores: Tensor, labels) -> Tuple[float, Tensor]:
    """
    Mean cross-entropy of softmax(scores) against integer labels.

    A single score vector with a scalar label gives gradient softmax - onehot;
    a (N, C) batch averages both loss and gradient over N.
    """
    scores = np.asarray(scores)
    single = scores.ndim == 1
    batch = scores[None] if single else scores
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if batch.ndim != 2 or labels.shape != (batch.shape[0],):
        raise ShapeMismatch(f"Scores {scores.shape} and labels {labels.shape} disagree")
    n, c = batch.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeMismatch(f"Label outside [0, {c})")

    shifted = batch - batch.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))

    grad = softmax(batch)
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, (grad[0] if single else grad)
