"""Minimal deterministic neural-network engine on numpy.

Provides the tensors-as-ndarrays model container, forward/backward passes for
a small set of layer kinds (conv2d, maxpool2x2, flatten, dense, relu, softmax),
plain-SGD training, and accuracy evaluation.  Everything is single-threaded
deterministic: given (seed, config, data) two runs produce bit-identical
parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import DatasetSplit

logger = logging.getLogger(__name__)

# learning rate is cut 10x from this (0-based) epoch onward
LR_DECAY_EPOCH = 9

LAYER_KINDS = ("conv2d", "maxpool2x2", "flatten", "dense", "relu", "softmax")


class ShapeMismatchError(ValueError):
    """A tensor did not have the shape a layer requires."""


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""


def mask_seed(seed: int) -> int:
    """Map an arbitrary int into the uint64 range SeedSequence accepts."""
    return int(seed) & 0xFFFFFFFFFFFFFFFF


def derive_seed(seed: int, *stream: int) -> int:
    """Derive a child seed from (seed, stream...) deterministically."""
    ss = np.random.SeedSequence([mask_seed(seed), *[int(s) for s in stream]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a feed-forward architecture.

    Only the fields relevant to ``kind`` are meaningful: conv2d uses
    ``filters``/``kernel_size``/``padding``, dense uses ``units``.
    """

    kind: str
    filters: int = 0
    kernel_size: int = 0
    padding: int = 0
    units: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d" and (self.filters < 1 or self.kernel_size < 1 or self.padding < 0):
            raise ValueError(f"invalid conv2d hyperparameters: {self}")
        if self.kind == "dense" and self.units < 1:
            raise ValueError(f"invalid dense hyperparameters: {self}")


@dataclass
class Model:
    """Ordered layers plus named parameter tensors and training metadata.

    Parameter names are ``{layer_index}.weight`` / ``{layer_index}.bias``;
    iteration order is ascending layer index with weight before bias.
    """

    arch: str
    layers: list[LayerSpec]
    input_shape: tuple[int, int, int]
    params: dict[str, np.ndarray]
    seed: int = 0
    epochs_trained: int = 0

    def param_names(self) -> list[str]:
        names = []
        for i, spec in enumerate(self.layers):
            if spec.kind in ("conv2d", "dense"):
                names.append(f"{i}.weight")
                names.append(f"{i}.bias")
        return names

    def copy(self) -> "Model":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def validate(self) -> None:
        expected = parameter_shapes(self.layers, self.input_shape)
        if list(self.params.keys()) != list(expected.keys()):
            raise ShapeMismatchError(
                f"model parameters {sorted(self.params)} do not match "
                f"architecture parameters {sorted(expected)}")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeMismatchError(
                    f"parameter {name}: shape {self.params[name].shape}, expected {shape}")


def infer_shapes(layers: list[LayerSpec], input_shape: tuple) -> list[tuple]:
    """Per-layer output shapes (batch dimension excluded); hard error on mismatch."""
    shape = tuple(input_shape)
    out = []
    for i, spec in enumerate(layers):
        where = f"layer {i} ({spec.kind})"
        if spec.kind == "conv2d":
            if len(shape) != 3:
                raise ShapeMismatchError(f"{where}: needs HxWxC input, got {shape}")
            h, w, c = shape
            oh = h + 2 * spec.padding - spec.kernel_size + 1
            ow = w + 2 * spec.padding - spec.kernel_size + 1
            if oh < 1 or ow < 1:
                raise ShapeMismatchError(f"{where}: kernel {spec.kernel_size} too large for {shape}")
            shape = (oh, ow, spec.filters)
        elif spec.kind == "maxpool2x2":
            if len(shape) != 3:
                raise ShapeMismatchError(f"{where}: needs HxWxC input, got {shape}")
            h, w, c = shape
            if h % 2 or w % 2:
                raise ShapeMismatchError(f"{where}: spatial dims must be even, got {shape}")
            shape = (h // 2, w // 2, c)
        elif spec.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ShapeMismatchError(f"{where}: needs flat input, got {shape}")
            shape = (spec.units,)
        else:  # relu, softmax keep shape
            if spec.kind == "softmax" and len(shape) != 1:
                raise ShapeMismatchError(f"{where}: needs flat input, got {shape}")
        out.append(shape)
    return out


def parameter_shapes(layers: list[LayerSpec], input_shape: tuple) -> dict[str, tuple]:
    """Map parameter name -> shape in canonical iteration order."""
    shapes = {}
    shape = tuple(input_shape)
    for i, spec in enumerate(layers):
        if spec.kind == "conv2d":
            k, c = spec.kernel_size, shape[2]
            shapes[f"{i}.weight"] = (k, k, c, spec.filters)
            shapes[f"{i}.bias"] = (spec.filters,)
        elif spec.kind == "dense":
            shapes[f"{i}.weight"] = (shape[0], spec.units)
            shapes[f"{i}.bias"] = (spec.units,)
        shape = infer_shapes([spec], shape)[0]
    return shapes


# ---------------------------------------------------------------------------
# architectures

ARCHITECTURES: dict[str, tuple[tuple[int, int, int], list[LayerSpec]]] = {
    # ~20,410 parameters; reaches ~98% on MNIST with the default recipe
    "mnist-cnn": ((28, 28, 1), [
        LayerSpec("conv2d", filters=12, kernel_size=3),
        LayerSpec("relu"),
        LayerSpec("maxpool2x2"),
        LayerSpec("flatten"),
        LayerSpec("dense", units=10),
        LayerSpec("softmax"),
    ]),
    # scaled-down CIFAR-10 convnet, ~292K parameters
    "cifar-smallnet": ((32, 32, 3), [
        LayerSpec("conv2d", filters=96, kernel_size=3, padding=1),
        LayerSpec("relu"),
        LayerSpec("maxpool2x2"),
        LayerSpec("conv2d", filters=192, kernel_size=3, padding=1),
        LayerSpec("relu"),
        LayerSpec("maxpool2x2"),
        LayerSpec("flatten"),
        LayerSpec("dense", units=10),
        LayerSpec("softmax"),
    ]),
}


def build_model(arch: str, seed: int = 0) -> Model:
    """Fresh model with Glorot-uniform weights and zero biases, seeded."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}")
    input_shape, layers = ARCHITECTURES[arch]
    rng = np.random.default_rng(np.random.SeedSequence([mask_seed(seed)]))
    params = {}
    for name, shape in parameter_shapes(layers, input_shape).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float32)
            continue
        if len(shape) == 4:  # conv kernel (k, k, cin, f)
            k, _, cin, f = shape
            fan_in, fan_out = k * k * cin, k * k * f
        else:  # dense (in, out)
            fan_in, fan_out = shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape).astype(np.float32)
    return Model(arch=arch, layers=list(layers), input_shape=input_shape,
                 params=params, seed=int(seed))


def model_from_params(arch: str, params: dict[str, np.ndarray], seed: int = 0,
                      epochs_trained: int = 0) -> Model:
    """Rebuild a Model around an existing parameter map, validating shapes."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    input_shape, layers = ARCHITECTURES[arch]
    expected = parameter_shapes(layers, input_shape)
    ordered = {}
    for name, shape in expected.items():
        if name not in params:
            raise ShapeMismatchError(f"architecture {arch}: missing parameter {name}")
        arr = np.ascontiguousarray(params[name], dtype=np.float32)
        if arr.shape != shape:
            raise ShapeMismatchError(
                f"architecture {arch}: parameter {name} has shape {arr.shape}, expected {shape}")
        ordered[name] = arr
    extra = set(params) - set(expected)
    if extra:
        raise ShapeMismatchError(f"architecture {arch}: unexpected parameters {sorted(extra)}")
    return Model(arch=arch, layers=list(layers), input_shape=input_shape,
                 params=ordered, seed=seed, epochs_trained=epochs_trained)


def infer_architecture(params: dict) -> str:
    """Find the registered architecture whose parameter names/shapes match."""
    names = set(params.keys())
    shapes = {}
    for name in names:
        arr = params[name]
        shapes[name] = tuple(arr.shape)
    for arch, (input_shape, layers) in ARCHITECTURES.items():
        expected = parameter_shapes(layers, input_shape)
        if set(expected) == names and all(expected[n] == shapes[n] for n in names):
            return arch
    raise ValueError("parameter map does not match any registered architecture; "
                     "pass the architecture explicitly")


# ---------------------------------------------------------------------------
# layer forward/backward

def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """(N,H,W,C) -> (N,OH,OW,k*k*C) patch matrix for valid convolution."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    n, h, w, c = x.shape
    oh, ow = h - k + 1, w - k + 1
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, (n, oh, ow, k, k, c), (s0, s1, s2, s1, s2, s3), writeable=False)
    return windows.reshape(n, oh, ow, k * k * c)


def _conv2d_forward(x, w, b, pad):
    k = w.shape[0]
    cols = _im2col(x, k, pad)
    wmat = w.reshape(-1, w.shape[3])
    y = cols @ wmat + b
    return y, (cols, x.shape)


def _conv2d_backward(dy, w, cache, pad):
    cols, x_shape = cache
    n, h, wd, c = x_shape
    k, f = w.shape[0], w.shape[3]
    wmat = w.reshape(-1, f)
    dw = (cols.reshape(-1, cols.shape[3]).T @ dy.reshape(-1, f)).reshape(w.shape)
    db = dy.sum(axis=(0, 1, 2))
    dcols = (dy @ wmat.T).reshape(n, dy.shape[1], dy.shape[2], k, k, c)
    dx = np.zeros((n, h + 2 * pad, wd + 2 * pad, c), dtype=dy.dtype)
    oh, ow = dy.shape[1], dy.shape[2]
    for i in range(k):
        for j in range(k):
            dx[:, i:i + oh, j:j + ow, :] += dcols[:, :, :, i, j, :]
    if pad:
        dx = dx[:, pad:-pad, pad:-pad, :]
    return dx, dw, db


def _maxpool_forward(x):
    n, h, w, c = x.shape
    oh, ow = h // 2, w // 2
    win = x.reshape(n, oh, 2, ow, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, oh, ow, 4, c)
    # ties resolved toward the lowest in-window index (deterministic)
    idx = win.argmax(axis=3)
    y = np.take_along_axis(win, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, (idx, x.shape)


def _maxpool_backward(dy, cache):
    idx, x_shape = cache
    n, h, w, c = x_shape
    oh, ow = h // 2, w // 2
    dwin = np.zeros((n, oh, ow, 4, c), dtype=dy.dtype)
    np.put_along_axis(dwin, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    return dwin.reshape(n, oh, ow, 2, 2, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, h, w, c)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_with_cache(model: Model, batch: np.ndarray):
    """Run all layers; return (probs, logits, caches)."""
    if not model.layers or model.layers[-1].kind != "softmax":
        raise ShapeMismatchError("model must end with a softmax layer")
    x = np.asarray(batch)
    if x.ndim != len(model.input_shape) + 1 or tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ShapeMismatchError(
            f"model input: batch shape {x.shape} does not match "
            f"(N, {', '.join(map(str, model.input_shape))})")
    caches = []
    for i, spec in enumerate(model.layers[:-1]):
        where = f"layer {i} ({spec.kind})"
        if spec.kind == "conv2d":
            w, b = model.params[f"{i}.weight"], model.params[f"{i}.bias"]
            x, cache = _conv2d_forward(x, w, b, spec.padding)
            caches.append(cache)
        elif spec.kind == "maxpool2x2":
            if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
                raise ShapeMismatchError(f"{where}: needs even HxW input, got {x.shape}")
            x, cache = _maxpool_forward(x)
            caches.append(cache)
        elif spec.kind == "flatten":
            caches.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == "dense":
            w, b = model.params[f"{i}.weight"], model.params[f"{i}.bias"]
            if x.ndim != 2 or x.shape[1] != w.shape[0]:
                raise ShapeMismatchError(
                    f"{where}: input shape {x.shape} incompatible with weight {w.shape}")
            caches.append(x)
            x = x @ w + b
        elif spec.kind == "relu":
            caches.append(x > 0)
            x = np.maximum(x, 0)
        else:
            raise ShapeMismatchError(f"{where}: softmax must be the final layer")
    logits = x
    if logits.ndim != 2:
        raise ShapeMismatchError(f"final layer (softmax): needs flat input, got {logits.shape}")
    return _softmax(logits), logits, caches


def forward(model: Model, batch: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch; rows are non-negative and sum to 1."""
    probs, _, _ = _forward_with_cache(model, batch)
    return probs


def loss_and_grad(model: Model, batch: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy loss and gradients keyed like ``model.params``.

    Softmax and cross-entropy are fused for the backward pass, so the
    gradient at the logits is (probs - onehot) / N.
    """
    labels = np.asarray(labels)
    probs, logits, caches = _forward_with_cache(model, batch)
    n, num_classes = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatchError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    # stable cross-entropy straight from logits
    zmax = logits.max(axis=1)
    lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"non-finite loss {loss}")

    dz = probs.copy()
    dz[np.arange(n), labels] -= 1.0
    dz /= n

    grads = {}
    dy = dz
    for i in range(len(model.layers) - 2, -1, -1):
        spec = model.layers[i]
        cache = caches[i]
        if spec.kind == "conv2d":
            w = model.params[f"{i}.weight"]
            dy, dw, db = _conv2d_backward(dy, w, cache, spec.padding)
            grads[f"{i}.weight"], grads[f"{i}.bias"] = dw, db
        elif spec.kind == "maxpool2x2":
            dy = _maxpool_backward(dy, cache)
        elif spec.kind == "flatten":
            dy = dy.reshape(cache)
        elif spec.kind == "dense":
            x = cache
            w = model.params[f"{i}.weight"]
            grads[f"{i}.weight"] = x.T @ dy
            grads[f"{i}.bias"] = dy.sum(axis=0)
            dy = dy @ w.T
        elif spec.kind == "relu":
            dy = dy * cache
    return loss, {name: grads[name] for name in model.param_names()}


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    val_split: float = 0.0
    seed: int = 0

    def validate(self, num_examples: int) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.batch_size <= num_examples:
            raise ValueError(
                f"batch_size must be in (0, {num_examples}], got {self.batch_size}")
        if not 0 <= self.val_split < 1:
            raise ValueError(f"val_split must be in [0, 1), got {self.val_split}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


def split_train_val(data: DatasetSplit, fraction: float, seed: int):
    """Disjoint, exhaustive (train, val) split; |val| = round(fraction * N)."""
    if not 0 <= fraction < 1:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    n = len(data)
    n_val = int(round(fraction * n))
    rng = np.random.default_rng(np.random.SeedSequence([mask_seed(seed)]))
    perm = rng.permutation(n)
    return data.subset(perm[n_val:]), data.subset(perm[:n_val])


def sgd_epoch(model: Model, images: np.ndarray, labels: np.ndarray, lr: float,
              batch_size: int, seed: int, mask=None) -> float:
    """One shuffled SGD pass, updating ``model.params`` in place.

    If ``mask`` is given its masked weights are forced to exactly 0.0 after
    every optimizer step.  Returns the mean per-batch loss.
    """
    n = len(images)
    rng = np.random.default_rng(np.random.SeedSequence([mask_seed(seed)]))
    order = rng.permutation(n)
    losses = []
    for bi, start in enumerate(range(0, n, batch_size)):
        idx = order[start:start + batch_size]
        try:
            loss, grads = loss_and_grad(model, images[idx], labels[idx])
        except TrainingDivergedError as e:
            raise TrainingDivergedError(f"batch {bi}: {e}") from None
        for name in model.param_names():
            model.params[name] -= (lr * grads[name]).astype(model.params[name].dtype, copy=False)
        if mask is not None:
            mask.apply(model.params)
        losses.append(loss)
    return float(np.mean(losses))


def epoch_learning_rate(base_lr: float, epoch: int) -> float:
    """Step schedule: 10x decay from epoch LR_DECAY_EPOCH onward."""
    return base_lr * (0.1 if epoch >= LR_DECAY_EPOCH else 1.0)


def train(model: Model, data: DatasetSplit, cfg: TrainConfig, mask=None) -> Model:
    """SGD-train a copy of ``model``; bit-deterministic given (seed, data, cfg).

    ``cfg.val_split`` of the data is held out (never trained on) and its
    accuracy is logged once per epoch.
    """
    cfg.validate(len(data))
    model = model.copy()
    if mask is not None:
        mask.validate_against(model.params)
        mask.apply(model.params)
    train_split, val_split = split_train_val(data, cfg.val_split, cfg.seed)
    for epoch in range(cfg.epochs):
        lr = epoch_learning_rate(cfg.learning_rate, epoch)
        try:
            mean_loss = sgd_epoch(model, train_split.images, train_split.labels, lr,
                                  cfg.batch_size, derive_seed(cfg.seed, 0, epoch), mask=mask)
        except TrainingDivergedError as e:
            raise TrainingDivergedError(f"epoch {epoch}: {e}") from None
        if len(val_split):
            val_acc = evaluate_accuracy(model, val_split)
            logger.info("epoch %d/%d: loss %.4f, val acc %.2f%%",
                        epoch + 1, cfg.epochs, mean_loss, val_acc)
        else:
            logger.info("epoch %d/%d: loss %.4f", epoch + 1, cfg.epochs, mean_loss)
    model.epochs_trained += cfg.epochs
    return model


def evaluate_accuracy(model: Model, data: DatasetSplit, batch_size: int = 1024) -> float:
    """Percent of argmax-correct predictions; argmax ties go to the lowest class."""
    n = len(data)
    if n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    for start in range(0, n, batch_size):
        probs = forward(model, data.images[start:start + batch_size])
        correct += int((probs.argmax(axis=1) == data.labels[start:start + batch_size]).sum())
    return 100.0 * correct / n
