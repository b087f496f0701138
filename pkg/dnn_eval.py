"""
DNN Evaluation Module for LCDA.
Builds the CNN a rollout describes, trains it with weight-noise injection
and measures Monte Carlo accuracy under device variation. Pure numpy,
float64, NCHW.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import BATCH_SIZE, LEARNING_RATE, MC_SAMPLES, NOISE_SIGMA
from datasets import Dataset
from design_space import Backbone, Rollout
from errors import DatasetError, DesignSpaceError, TrainingDivergedError
from logger import get_logger

logger = get_logger(__name__)

Params = Dict[str, np.ndarray]

EVAL_BATCH = 256


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class Conv2D:
    """Stride 1, same padding convolution."""

    def __init__(self, name: str, in_channels: int, out_channels: int, kernel: int):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel

    @property
    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        k = self.kernel
        return {f"{self.name}.weight": (self.out_channels, self.in_channels, k, k),
                f"{self.name}.bias": (self.out_channels,)}

    @property
    def fan_in(self) -> int:
        return self.in_channels * self.kernel * self.kernel

    def forward(self, x: np.ndarray, params: Params):
        w = params[f"{self.name}.weight"]
        b = params[f"{self.name}.bias"]
        k, pad = self.kernel, self.kernel // 2
        n, _, h, wd = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        out = np.zeros((n, h, wd, self.out_channels))
        for i in range(k):
            for j in range(k):
                out += np.tensordot(xp[:, :, i:i + h, j:j + wd], w[:, :, i, j], axes=([1], [1]))
        out += b
        return out.transpose(0, 3, 1, 2), xp

    def backward(self, dout: np.ndarray, xp: np.ndarray, params: Params):
        w = params[f"{self.name}.weight"]
        k, pad = self.kernel, self.kernel // 2
        _, _, h, wd = dout.shape
        d = dout.transpose(0, 2, 3, 1)
        dw = np.zeros_like(w)
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                window = xp[:, :, i:i + h, j:j + wd]
                dw[:, :, i, j] = np.tensordot(d, window, axes=([0, 1, 2], [0, 2, 3]))
                dxp[:, :, i:i + h, j:j + wd] += np.tensordot(d, w[:, :, i, j], axes=([3], [0])).transpose(0, 3, 1, 2)
        grads = {f"{self.name}.weight": dw, f"{self.name}.bias": d.sum(axis=(0, 1, 2))}
        return dxp[:, :, pad:pad + h, pad:pad + wd], grads


class ReLU:
    param_shapes: Dict[str, Tuple[int, ...]] = {}

    def forward(self, x, params):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dout, mask, params):
        return dout * mask, {}


class MaxPool2:
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""
    param_shapes: Dict[str, Tuple[int, ...]] = {}

    def forward(self, x, params):
        n, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        windows = (x[:, :, :2 * ho, :2 * wo]
                   .reshape(n, c, ho, 2, wo, 2)
                   .transpose(0, 1, 2, 4, 3, 5)
                   .reshape(n, c, ho, wo, 4))
        idx = windows.argmax(axis=-1)
        out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
        return out, (x.shape, idx)

    def backward(self, dout, cache, params):
        shape, idx = cache
        n, c, h, w = shape
        ho, wo = h // 2, w // 2
        grad = np.zeros((n, c, ho, wo, 4))
        np.put_along_axis(grad, idx[..., None], dout[..., None], axis=-1)
        grad = grad.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
        dx = np.zeros(shape)
        dx[:, :, :2 * ho, :2 * wo] = grad
        return dx, {}


class Flatten:
    param_shapes: Dict[str, Tuple[int, ...]] = {}

    def forward(self, x, params):
        return x.reshape(len(x), -1), x.shape

    def backward(self, dout, shape, params):
        return dout.reshape(shape), {}


class Dense:
    def __init__(self, name: str, in_features: int, out_features: int):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features

    @property
    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {f"{self.name}.weight": (self.in_features, self.out_features),
                f"{self.name}.bias": (self.out_features,)}

    @property
    def fan_in(self) -> int:
        return self.in_features

    def forward(self, x, params):
        return x @ params[f"{self.name}.weight"] + params[f"{self.name}.bias"], x

    def backward(self, dout, x, params):
        grads = {f"{self.name}.weight": x.T @ dout, f"{self.name}.bias": dout.sum(axis=0)}
        return dout @ params[f"{self.name}.weight"].T, grads


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class Network:
    """
    Sequential CNN: conv/ReLU (+pool) blocks, flatten, FC stack.

    Parameters live in `params`; forward/backward accept an alternative
    parameter dict so perturbed copies can be evaluated without mutation.
    """

    def __init__(self, layers: list, params: Params, input_shape: Tuple[int, int, int]):
        self.layers = layers
        self.params = params
        self.input_shape = input_shape
        self.loss_history: List[float] = []

    @property
    def weight_names(self) -> List[str]:
        """Crossbar-resident tensors; biases stay in digital periphery."""
        return [name for name in self.params if name.endswith(".weight")]

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "Network":
        clone = Network(self.layers, {k: v.copy() for k, v in self.params.items()}, self.input_shape)
        clone.loss_history = list(self.loss_history)
        return clone

    def forward(self, x: np.ndarray, params: Optional[Params] = None, until_flatten: bool = False):
        params = self.params if params is None else params
        caches = []
        for layer in self.layers:
            if until_flatten and isinstance(layer, Flatten):
                break
            x, cache = layer.forward(x, params)
            caches.append(cache)
        return x, caches

    def backward(self, dout: np.ndarray, caches: list, params: Optional[Params] = None) -> Params:
        params = self.params if params is None else params
        grads: Params = {}
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dout, layer_grads = layer.backward(dout, cache, params)
            grads.update(layer_grads)
        return grads

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, params: Optional[Params] = None):
        logits, caches = self.forward(x, params)
        loss, dlogits = softmax_cross_entropy(logits, y)
        return loss, self.backward(dlogits, caches, params)

    def loss(self, dataset: Dataset, params: Optional[Params] = None) -> float:
        total = 0.0
        for start in range(0, len(dataset), EVAL_BATCH):
            logits, _ = self.forward(dataset.images[start:start + EVAL_BATCH], params)
            batch_loss, _ = softmax_cross_entropy(logits, dataset.labels[start:start + EVAL_BATCH])
            total += batch_loss * len(logits)
        return total / len(dataset)

    def predict(self, images: np.ndarray, params: Optional[Params] = None) -> np.ndarray:
        preds = []
        for start in range(0, len(images), EVAL_BATCH):
            logits, _ = self.forward(images[start:start + EVAL_BATCH], params)
            preds.append(logits.argmax(axis=1))
        return np.concatenate(preds)

    def accuracy(self, dataset: Dataset, params: Optional[Params] = None) -> float:
        if len(dataset) == 0:
            raise DatasetError("Cannot measure accuracy on an empty dataset")
        return float(np.count_nonzero(self.predict(dataset.images, params) == dataset.labels)) / len(dataset)


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative iid Gaussian weight noise: w * (1 + eps), eps ~ N(0, sigma^2)."""
    sigma: float = NOISE_SIGMA
    per_device_independent: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    def perturb(self, net: Network, rng: np.random.Generator) -> Params:
        if self.sigma == 0:
            return net.params
        perturbed = dict(net.params)
        for name in net.weight_names:
            w = net.params[name]
            perturbed[name] = w * (1.0 + rng.normal(0.0, self.sigma, size=w.shape))
        return perturbed


@dataclass(frozen=True)
class EvalResult:
    clean_accuracy: float
    mc_mean_accuracy: float
    mc_std: float
    num_samples: int
    seed: int
    samples: Tuple[float, ...] = field(default=(), compare=False)


def build_network(rollout: Rollout, backbone: Backbone, seed: int) -> Network:
    """
    Instantiate the rollout on the backbone with He-normal weights.

    Raises:
        DesignSpaceError: if the rollout does not fit the backbone
    """
    if len(rollout.layers) != backbone.num_conv_layers:
        raise DesignSpaceError(
            f"Rollout has {len(rollout.layers)} layers, backbone expects {backbone.num_conv_layers}")

    layers: list = []
    in_channels = backbone.input_channels
    for index, (channels, kernel) in enumerate(rollout.layers):
        layers.append(Conv2D(f"conv{index}", in_channels, channels, kernel))
        layers.append(ReLU())
        if index in backbone.pool_after:
            layers.append(MaxPool2())
        in_channels = channels
    layers.append(Flatten())
    fc_sizes = backbone.fc_sizes(in_channels)
    for index, (fan_in, fan_out) in enumerate(fc_sizes):
        layers.append(Dense(f"fc{index}", fan_in, fan_out))
        if index < len(fc_sizes) - 1:
            layers.append(ReLU())

    rng = np.random.default_rng(seed)
    params: Params = {}
    for layer in layers:
        for name, shape in layer.param_shapes.items():
            if name.endswith(".weight"):
                params[name] = rng.normal(0.0, np.sqrt(2.0 / layer.fan_in), size=shape)
            else:
                params[name] = np.zeros(shape)
    return Network(layers, params, backbone.input_shape)


def train_noise_injection(net: Network, dataset: Dataset, noise: NoiseModel, epochs: int,
                          lr: float = LEARNING_RATE, seed: int = 0,
                          batch_size: int = BATCH_SIZE) -> Network:
    """
    Mini-batch gradient descent where every forward pass sees freshly perturbed weights.

    Gradients are taken through the perturbed forward and applied to the clean
    weights. Shuffling and noise use independent streams, so sigma = 0 is
    exactly vanilla training with the same seed.

    Returns:
        A trained copy; `net` is left untouched

    Raises:
        TrainingDivergedError: if a batch loss is not finite
    """
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, got {epochs}")
    if len(dataset) == 0:
        raise DatasetError("Cannot train on an empty dataset")

    trained = net.copy()
    shuffle_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    n = len(dataset)
    for epoch in range(epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for batch, start in enumerate(range(0, n, batch_size)):
            idx = order[start:start + batch_size]
            params = noise.perturb(trained, noise_rng)
            loss, grads = trained.loss_and_grads(dataset.images[idx], dataset.labels[idx], params)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch, loss)
            for name, grad in grads.items():
                trained.params[name] -= lr * grad
            epoch_loss += loss * len(idx)
        trained.loss_history.append(epoch_loss / n)
        logger.debug(f"Epoch {epoch + 1}/{epochs}: loss {trained.loss_history[-1]:.4f} (sigma={noise.sigma})")
    return trained


def mc_accuracy(net: Network, dataset: Dataset, noise: NoiseModel,
                num_samples: int = MC_SAMPLES, seed: int = 0) -> EvalResult:
    """
    Monte Carlo accuracy: one iid weight perturbation per sample, evaluated on the full set.

    With sigma = 0 every sample equals the clean accuracy, so the clean value is
    reported directly with zero spread.
    """
    if num_samples < 1:
        raise ValueError(f"num_samples must be at least 1, got {num_samples}")
    clean = net.accuracy(dataset)
    if noise.sigma == 0:
        return EvalResult(clean, clean, 0.0, num_samples, seed, (clean,) * num_samples)

    rng = np.random.default_rng(seed)
    samples = tuple(net.accuracy(dataset, noise.perturb(net, rng)) for _ in range(num_samples))
    return EvalResult(
        clean_accuracy=clean,
        mc_mean_accuracy=float(np.mean(samples)),
        mc_std=float(np.std(samples)),
        num_samples=num_samples,
        seed=seed,
        samples=samples,
    )


def gradient_check(net: Network, x: np.ndarray, y: np.ndarray, eps: float = 1e-5) -> Dict[str, float]:
    """
    Relative error between analytic and central-difference gradients per tensor.

    Intended for small networks: every scalar parameter is perturbed.
    """
    _, analytic = net.loss_and_grads(x, y)
    errors = {}
    for name, value in net.params.items():
        numeric = np.zeros_like(value)
        flat, num_flat = value.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus, _ = net.loss_and_grads(x, y)
            flat[i] = original - eps
            minus, _ = net.loss_and_grads(x, y)
            flat[i] = original
            num_flat[i] = (plus - minus) / (2 * eps)
        denom = max(np.linalg.norm(analytic[name]) + np.linalg.norm(numeric), 1e-12)
        errors[name] = float(np.linalg.norm(analytic[name] - numeric) / denom)
    return errors
