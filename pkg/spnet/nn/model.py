# spnet/nn/model.py
"""
The shallow view classifier.

Four 3x3 convolution blocks with 24, 32, 48 and 64 feature maps (tanh, then
2x2 max pooling for the first three and global average pooling for the last),
a tanh fully connected layer and a linear output layer. Dropout follows every
block and the hidden layer. The forward pass returns the raw class scores; the
final tanh is exposed separately through `output`.
"""

import logging
from collections import OrderedDict
from typing import Dict, Optional, Tuple

import numpy as np

from ..exceptions import ShapeMismatch
from . import layers
from .layers import Tensor

logger = logging.getLogger(__name__)

CONV_CHANNELS = (24, 32, 48, 64)
DEFAULT_HIDDEN_UNITS = 512
DEFAULT_DROPOUT_RATE = 0.2


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class SpnetModel:
    """Parameters of the classifier plus the forward and backward passes"""

    def __init__(
        self,
        params: Dict[str, np.ndarray],
        dropout_rate: float = DEFAULT_DROPOUT_RATE,
    ):
        self.params: Dict[str, np.ndarray] = OrderedDict(params)
        self.dropout_rate = dropout_rate
        self._validate()

    @classmethod
    def initialize(
        cls,
        num_classes: int,
        seed: int = 0,
        hidden_units: int = DEFAULT_HIDDEN_UNITS,
        dropout_rate: float = DEFAULT_DROPOUT_RATE,
        dtype=np.float32,
    ) -> "SpnetModel":
        """Glorot-uniform weights and zero biases drawn from a seeded generator"""
        if num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {num_classes}")
        rng = np.random.default_rng(seed)
        params: Dict[str, np.ndarray] = OrderedDict()
        in_channels = 1
        for k, out_channels in enumerate(CONV_CHANNELS, start=1):
            shape = (out_channels, in_channels, 3, 3)
            params[f"conv{k}.weight"] = glorot_uniform(rng, shape, in_channels * 9, out_channels * 9).astype(dtype)
            params[f"conv{k}.bias"] = np.zeros(out_channels, dtype=dtype)
            in_channels = out_channels
        params["fc1.weight"] = glorot_uniform(rng, (in_channels, hidden_units), in_channels, hidden_units).astype(dtype)
        params["fc1.bias"] = np.zeros(hidden_units, dtype=dtype)
        params["fc2.weight"] = glorot_uniform(rng, (hidden_units, num_classes), hidden_units, num_classes).astype(dtype)
        params["fc2.bias"] = np.zeros(num_classes, dtype=dtype)
        return cls(params, dropout_rate=dropout_rate)

    def _validate(self) -> None:
        expected = [f"conv{k}.{p}" for k in range(1, 5) for p in ("weight", "bias")]
        expected += ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"]
        if list(self.params) != expected:
            raise ShapeMismatch(f"Parameter names {list(self.params)} do not match the architecture")
        in_channels = 1
        for k, out_channels in enumerate(CONV_CHANNELS, start=1):
            if self.params[f"conv{k}.weight"].shape != (out_channels, in_channels, 3, 3):
                raise ShapeMismatch(f"conv{k}.weight has shape {self.params[f'conv{k}.weight'].shape}")
            in_channels = out_channels
        fc1, fc2 = self.params["fc1.weight"], self.params["fc2.weight"]
        if fc1.shape[0] != in_channels or fc2.shape[0] != fc1.shape[1]:
            raise ShapeMismatch(f"Dense shapes {fc1.shape} and {fc2.shape} do not chain")

    @property
    def num_classes(self) -> int:
        return int(self.params["fc2.weight"].shape[1])

    @property
    def hidden_units(self) -> int:
        return int(self.params["fc1.weight"].shape[1])

    @property
    def dtype(self):
        return self.params["conv1.weight"].dtype

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "SpnetModel":
        return SpnetModel({k: v.copy() for k, v in self.params.items()}, dropout_rate=self.dropout_rate)

    def astype(self, dtype) -> "SpnetModel":
        return SpnetModel({k: v.astype(dtype) for k, v in self.params.items()}, dropout_rate=self.dropout_rate)

    def zero_grads(self) -> Dict[str, np.ndarray]:
        return OrderedDict((k, np.zeros_like(v)) for k, v in self.params.items())

    # ================================
    # FORWARD / BACKWARD
    # ================================

    def _prepare(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None] if x.shape[0] != 1 else x[None]
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeMismatch(f"Expected single-channel images, got shape {np.shape(images)}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ShapeMismatch(f"Image extents must be divisible by 8, got {x.shape[2]} x {x.shape[3]}")
        return x

    def forward(
        self,
        images: np.ndarray,
        train_mode: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[Tensor, Dict]:
        """
        Class scores for a batch of depth images.

        Args:
            images: (N, 1, H, W) batch; a single (1, H, W) or (H, W) image is promoted
            train_mode: apply dropout
            rng: generator for dropout masks, required in train_mode

        Returns:
            (N, C) raw scores and the activation cache for backward
        """
        p = self.params
        x = self._prepare(images)
        cache: Dict = {}
        for k in range(1, 5):
            x, cache[f"conv{k}"] = layers.conv3x3_forward(x, p[f"conv{k}.weight"], p[f"conv{k}.bias"])
            x, cache[f"tanh{k}"] = layers.tanh_forward(x)
            if k < 4:
                x, cache[f"pool{k}"] = layers.maxpool2x2_forward(x)
            else:
                x, cache[f"pool{k}"] = layers.global_avg_pool_forward(x)
            x, cache[f"drop{k}"] = layers.dropout_forward(x, self.dropout_rate, train_mode, rng)

        x, cache["fc1"] = layers.dense_forward(x, p["fc1.weight"], p["fc1.bias"])
        x, cache["tanh5"] = layers.tanh_forward(x)
        x, cache["drop5"] = layers.dropout_forward(x, self.dropout_rate, train_mode, rng)
        scores, cache["fc2"] = layers.dense_forward(x, p["fc2.weight"], p["fc2.bias"])
        return layers.check_finite("forward", scores), cache

    def backward(self, cache: Dict, d_scores: Tensor) -> Tuple[Dict[str, np.ndarray], Tensor]:
        """Parameter gradients (same keys as params) and the gradient w.r.t. the input batch"""
        p = self.params
        grads: Dict[str, np.ndarray] = OrderedDict()
        d = np.asarray(d_scores, dtype=self.dtype)

        d, grads["fc2.weight"], grads["fc2.bias"] = layers.dense_backward(d, cache["fc2"], p["fc2.weight"])
        d = layers.dropout_backward(d, cache["drop5"])
        d = layers.tanh_backward(d, cache["tanh5"])
        d, grads["fc1.weight"], grads["fc1.bias"] = layers.dense_backward(d, cache["fc1"], p["fc1.weight"])

        for k in range(4, 0, -1):
            d = layers.dropout_backward(d, cache[f"drop{k}"])
            if k < 4:
                d = layers.maxpool2x2_backward(d, cache[f"pool{k}"])
            else:
                d = layers.global_avg_pool_backward(d, cache[f"pool{k}"])
            d = layers.tanh_backward(d, cache[f"tanh{k}"])
            d, grads[f"conv{k}.weight"], grads[f"conv{k}.bias"] = layers.conv3x3_backward(d, cache[f"conv{k}"])

        ordered = OrderedDict((name, layers.check_finite(name, grads[name])) for name in p)
        return ordered, d

    def predict(self, images: np.ndarray, batch_size: int = 64) -> Tensor:
        """Inference-mode scores, evaluated in fixed-size chunks"""
        x = self._prepare(images)
        chunks = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        if not chunks:
            return np.zeros((0, self.num_classes), dtype=self.dtype)
        return np.concatenate(chunks, axis=0)

    @staticmethod
    def output(scores: Tensor) -> Tensor:
        """Final tanh activation applied on top of the scores"""
        return np.tanh(scores)
