"""Small convolutional classifier in plain numpy with exact analytic gradients.

Images enter as ``(N, C, H, W)`` float64 batches in [0, 1]. Internally
activations are kept channel-last (NHWC) so convolutions reduce to a single
matrix product over gathered patches.

Parameter conventions (needed by anyone re-implementing the forward pass):

* conv weights ``W`` are ``(k, k, C_in, C_out)``; output pixel
  ``y[n, i, j, o] = b[o] + sum_{a, b, c} xpad[n, i*s + a, j*s + b, c] * W[a, b, c, o]``
  with zero padding ``pad`` on each side;
* max-pool is 2x2 with stride 2; ties route the gradient to the first maximum
  in row-major window order;
* flatten turns ``(N, H, W, C)`` into ``(N, H*W*C)`` in row-major order;
* dense weights are ``(in, out)`` and ``y = x @ W + b``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .seeding import rng as derived_rng


class ShapeError(ValueError):
    pass


LayerSpec = dict  # {"type": "conv" | "relu" | "maxpool" | "flatten" | "dense", ...}


def conv(out: int, kernel: int = 3, stride: int = 1, pad: int | None = None) -> LayerSpec:
    return {"type": "conv", "out": out, "kernel": kernel, "stride": stride,
            "pad": kernel // 2 if pad is None else pad}


def relu() -> LayerSpec:
    return {"type": "relu"}


def maxpool() -> LayerSpec:
    return {"type": "maxpool"}


def flatten() -> LayerSpec:
    return {"type": "flatten"}


def dense(out: int) -> LayerSpec:
    return {"type": "dense", "out": out}


def small_cnn_layers(num_classes: int, widths: Sequence[int] = (16, 32)) -> list[LayerSpec]:
    """conv3x3 - ReLU - pool blocks followed by a dense head."""
    layers: list[LayerSpec] = []
    for wdt in widths:
        layers += [conv(wdt), relu(), maxpool()]
    return layers + [flatten(), dense(num_classes)]


def _shape_chain(layers: Sequence[LayerSpec], input_shape: tuple[int, int, int]) -> list[tuple]:
    """Return the NHWC-style shape (without N) after every layer."""
    c, h, w = input_shape
    shape: tuple = (h, w, c)
    shapes = []
    for i, layer in enumerate(layers):
        kind = layer["type"]
        if kind == "conv":
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: conv after flatten")
            h, w, c = shape
            k, s, p = layer["kernel"], layer["stride"], layer["pad"]
            ho = (h + 2 * p - k) // s + 1
            wo = (w + 2 * p - k) // s + 1
            if ho < 1 or wo < 1:
                raise ShapeError(f"layer {i}: conv output would be empty")
            shape = (ho, wo, layer["out"])
        elif kind == "maxpool":
            if len(shape) != 3 or shape[0] % 2 or shape[1] % 2:
                raise ShapeError(f"layer {i}: max-pool needs even spatial size, got {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif kind == "dense":
            if len(shape) != 1:
                raise ShapeError(f"layer {i}: dense needs a flattened input")
            shape = (layer["out"],)
        elif kind != "relu":
            raise ShapeError(f"layer {i}: unknown layer type {kind!r}")
        shapes.append(shape)
    return shapes


@dataclass
class ClassifierModel:
    layers: list[LayerSpec]
    params: list[dict[str, np.ndarray]]
    input_shape: tuple[int, int, int]
    num_classes: int
    seed: int = 0
    model_id: str = "model"

    def __post_init__(self) -> None:
        shapes = _shape_chain(self.layers, self.input_shape)
        if shapes[-1] != (self.num_classes,):
            raise ShapeError(
                f"architecture ends in {shapes[-1]}, expected ({self.num_classes},)"
            )
        if len(self.params) != len(self.layers):
            raise ShapeError("one parameter dict per layer is required")

    def copy(self) -> "ClassifierModel":
        return copy.deepcopy(self)

    def flat_params(self) -> list[np.ndarray]:
        return [p[k] for p in self.params for k in sorted(p)]

    @property
    def num_parameters(self) -> int:
        return sum(a.size for a in self.flat_params())


def init_params(layers: Sequence[LayerSpec], input_shape: tuple[int, int, int],
                seed: int) -> list[dict[str, np.ndarray]]:
    """He (fan-in) normal initialisation for weights, zeros for biases."""
    gen = derived_rng(seed, "init")
    shapes = _shape_chain(layers, input_shape)
    prev = (input_shape[1], input_shape[2], input_shape[0])
    params: list[dict[str, np.ndarray]] = []
    for layer, shape in zip(layers, shapes):
        if layer["type"] == "conv":
            k, cin = layer["kernel"], prev[2]
            fan_in = k * k * cin
            params.append({
                "W": gen.normal(0.0, math.sqrt(2.0 / fan_in), size=(k, k, cin, layer["out"])),
                "b": np.zeros(layer["out"]),
            })
        elif layer["type"] == "dense":
            fan_in = prev[0]
            params.append({
                "W": gen.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, layer["out"])),
                "b": np.zeros(layer["out"]),
            })
        else:
            params.append({})
        prev = shape
    return params


def build_model(layers: Sequence[LayerSpec], input_shape: tuple[int, int, int],
                num_classes: int, seed: int = 0, model_id: str | None = None) -> ClassifierModel:
    layers = [dict(layer) for layer in layers]
    return ClassifierModel(
        layers=layers,
        params=init_params(layers, tuple(input_shape), seed),
        input_shape=tuple(input_shape),
        num_classes=num_classes,
        seed=seed,
        model_id=model_id or f"model-{seed}",
    )


def small_cnn(input_shape: tuple[int, int, int], num_classes: int, seed: int = 0,
              widths: Sequence[int] = (16, 32), model_id: str | None = None) -> ClassifierModel:
    return build_model(small_cnn_layers(num_classes, widths), input_shape, num_classes,
                       seed=seed, model_id=model_id)


def linear_model(weights: np.ndarray, bias: np.ndarray,
                 input_shape: tuple[int, int, int], model_id: str = "linear") -> ClassifierModel:
    """Softmax regression on flattened pixels; ``weights`` is ``(H*W*C, K)`` in NHWC flatten order."""
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.shape[1]
    return ClassifierModel(
        layers=[flatten(), dense(k)],
        params=[{}, {"W": weights.copy(), "b": np.asarray(bias, dtype=np.float64).copy()}],
        input_shape=tuple(input_shape),
        num_classes=k,
        model_id=model_id,
    )


# --- layer kernels -------------------------------------------------------------


def _conv_forward(x, W, b, stride, pad):
    n, h, w, c = x.shape
    k = W.shape[0]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1:3]
    # (N, Ho, Wo, C, k, k) -> rows ordered (a, b, c) to match W.reshape
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * c)
    out = cols @ W.reshape(k * k * c, -1) + b
    return out.reshape(n, ho, wo, -1), (cols, xp.shape, ho, wo)


def _conv_backward(dout, W, cache, stride, pad, need_dx=True):
    cols, xp_shape, ho, wo = cache
    k, _, c, o = W.shape
    d2 = dout.reshape(-1, o)
    dW = (cols.T @ d2).reshape(W.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = (d2 @ W.reshape(k * k * c, o).T).reshape(dout.shape[0], ho, wo, k, k, c)
    dxp = np.zeros(xp_shape)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad, :]
    return dxp, dW, db


_POOL_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def _pool_forward(x, keep=True):
    quads = [x[:, i::2, j::2] for i, j in _POOL_OFFSETS]
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    if not keep:
        return out, None
    # route to the first maximum in row-major window order
    routes, taken = [], np.zeros(out.shape, dtype=bool)
    for q in quads:
        hit = (q == out) & ~taken
        taken |= hit
        routes.append(hit)
    return out, (routes, x.shape)


def _pool_backward(dout, cache):
    routes, shape = cache
    dx = np.zeros(shape)
    for (i, j), hit in zip(_POOL_OFFSETS, routes):
        dx[:, i::2, j::2] = dout * hit
    return dx


def _as_batch(model: ClassifierModel, images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ShapeError(f"expected batch of shape (N, {model.input_shape}), got {x.shape}")
    return x.transpose(0, 2, 3, 1)


def _forward_cached(model: ClassifierModel, x: np.ndarray, keep: bool):
    caches = []
    for layer, p in zip(model.layers, model.params):
        kind = layer["type"]
        cache = None
        if kind == "conv":
            x, cache = _conv_forward(x, p["W"], p["b"], layer["stride"], layer["pad"])
        elif kind == "relu":
            if keep:
                cache = x > 0
            x = np.maximum(x, 0.0)
        elif kind == "maxpool":
            x, cache = _pool_forward(x, keep)
        elif kind == "flatten":
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        elif kind == "dense":
            cache = x
            x = x @ p["W"] + p["b"]
        caches.append(cache if keep else None)
    return x, caches


def _backward(model: ClassifierModel, dlogits: np.ndarray, caches, need_input: bool):
    grads: list[dict[str, np.ndarray]] = [dict() for _ in model.layers]
    d = dlogits
    for i in range(len(model.layers) - 1, -1, -1):
        layer, p, cache = model.layers[i], model.params[i], caches[i]
        kind = layer["type"]
        need_dx = need_input or i > 0
        if kind == "dense":
            grads[i] = {"W": cache.T @ d, "b": d.sum(axis=0)}
            d = d @ p["W"].T if need_dx else None
        elif kind == "conv":
            d, dW, db = _conv_backward(d, p["W"], cache, layer["stride"], layer["pad"], need_dx)
            grads[i] = {"W": dW, "b": db}
        elif kind == "relu":
            d = d * cache
        elif kind == "maxpool":
            d = _pool_backward(d, cache)
        elif kind == "flatten":
            d = d.reshape(cache)
    return grads, d


# --- public API ----------------------------------------------------------------


def forward(model: ClassifierModel, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Logits, one row per image."""
    x = _as_batch(model, images)
    if len(x) <= batch_size:
        return _forward_cached(model, x, keep=False)[0]
    return np.concatenate([_forward_cached(model, x[i:i + batch_size], keep=False)[0]
                           for i in range(0, len(x), batch_size)])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample softmax cross-entropy."""
    z = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return logz - z[np.arange(len(labels)), labels]


def _check_labels(model: ClassifierModel, labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(labels) != n:
        raise ShapeError(f"{len(labels)} labels for {n} images")
    if labels.size and (labels.min() < 0 or labels.max() >= model.num_classes):
        raise ValueError(f"labels must lie in [0, {model.num_classes})")
    return labels


def loss_and_param_grads(model: ClassifierModel, images: np.ndarray, labels,
                         weight_decay: float = 0.0):
    """Mean cross-entropy and the gradient of ``loss + weight_decay * 0.5 * ||params||^2``.

    The returned loss excludes the weight-decay term. Gradients come back as
    one dict per layer, matching ``model.params``.
    """
    x = _as_batch(model, images)
    labels = _check_labels(model, labels, len(x))
    logits, caches = _forward_cached(model, x, keep=True)
    loss = float(cross_entropy(logits, labels).mean())
    d = softmax(logits)
    d[np.arange(len(labels)), labels] -= 1.0
    d /= len(labels)
    grads, _ = _backward(model, d, caches, need_input=False)
    if weight_decay:
        for g, p in zip(grads, model.params):
            for k in g:
                g[k] = g[k] + weight_decay * p[k]
    return loss, grads


def input_gradient(model: ClassifierModel, images: np.ndarray, labels) -> np.ndarray:
    """d(cross-entropy of the true label)/d(pixel), per image.

    Accepts a single ``(C, H, W)`` image with a scalar label or a batch; the
    gradient of each image is that of its own loss term.
    """
    single = np.asarray(images).ndim == 3
    x = _as_batch(model, images)
    labels = _check_labels(model, np.atleast_1d(labels), len(x))
    logits, caches = _forward_cached(model, x, keep=True)
    d = softmax(logits)
    d[np.arange(len(labels)), labels] -= 1.0
    _, dx = _backward(model, d, caches, need_input=True)
    dx = dx.transpose(0, 3, 1, 2)
    return dx[0] if single else dx


def predict(model: ClassifierModel, images: np.ndarray) -> np.ndarray:
    """Arg-max class; ties resolve to the lowest index."""
    return forward(model, images).argmax(axis=1)


def evaluate(model: ClassifierModel, images: np.ndarray, labels) -> float:
    labels = np.asarray(labels).reshape(-1)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(model, images) == labels))


# --- optimisation --------------------------------------------------------------


def sgd_step(params, grads, velocity, lr: float, momentum: float):
    """Heavy-ball SGD: ``v <- momentum * v + g``; ``p <- p - lr * v``.

    Pure function; ``velocity`` may be None for a fresh optimiser state.
    """
    if velocity is None:
        velocity = [{k: np.zeros_like(a) for k, a in p.items()} for p in params]
    new_params, new_velocity = [], []
    for p, g, v in zip(params, grads, velocity):
        nv = {k: momentum * v[k] + g[k] for k in p}
        new_velocity.append(nv)
        new_params.append({k: p[k] - lr * nv[k] for k in p})
    return new_params, new_velocity


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 30
    plateau_patience: int = 10
    plateau_factor: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("learning_rate", "momentum", "weight_decay", "batch_size",
                     "epochs", "plateau_patience"):
            if not getattr(self, name) > 0:
                raise ValueError(f"TrainConfig.{name} must be positive")
        if not self.plateau_factor > 1:
            raise ValueError("TrainConfig.plateau_factor must exceed 1")


class PlateauScheduler:
    """Divide the learning rate when validation loss stops decreasing.

    After ``patience`` consecutive epochs without a strict decrease of the best
    validation loss, the next epoch runs at ``lr / factor`` and the count
    restarts.
    """

    def __init__(self, lr: float, patience: int, factor: float):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr /= self.factor
                self.bad_epochs = 0
        return self.lr


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def rows(self) -> list[tuple[int, float, float, float, float]]:
        return list(zip(range(len(self.train_loss)), self.train_loss, self.val_loss,
                        self.val_accuracy, self.learning_rate))


# (images, labels, epoch) -> images
AugmentHook = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def train(model: ClassifierModel, train_set, val_set, config: TrainConfig,
          augment: AugmentHook | None = None, log: Callable[[str], None] | None = None):
    """Mini-batch SGD with momentum, weight decay and plateau learning-rate decay.

    ``train_set`` / ``val_set`` expose ``images`` and ``labels`` arrays.
    ``augment`` is called once per epoch on the full training array. Returns a
    new model carrying the parameters of the epoch with the best validation
    accuracy (earliest on ties) and the per-epoch history.
    """
    if len(train_set.labels) == 0 or len(val_set.labels) == 0:
        raise ValueError("training and validation sets must be non-empty")
    train_images = np.asarray(train_set.images, dtype=np.float64)
    train_labels = np.asarray(train_set.labels, dtype=np.int64)
    params = copy.deepcopy(model.params)
    velocity = None
    sched = PlateauScheduler(config.learning_rate, config.plateau_patience, config.plateau_factor)
    history = TrainHistory()
    best_acc, best_params = -1.0, copy.deepcopy(params)
    work = model.copy()
    n = len(train_labels)

    for epoch in range(config.epochs):
        lr = sched.lr
        images = augment(train_images, train_labels, epoch) if augment else train_images
        order = derived_rng(config.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            work.params = params
            loss, grads = loss_and_param_grads(work, images[idx], train_labels[idx],
                                               config.weight_decay)
            params, velocity = sgd_step(params, grads, velocity, lr, config.momentum)
            total += loss * len(idx)
        work.params = params
        logits = forward(work, val_set.images)
        val_loss = float(cross_entropy(logits, np.asarray(val_set.labels)).mean())
        val_acc = float(np.mean(logits.argmax(axis=1) == np.asarray(val_set.labels)))
        history.train_loss.append(total / n)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        history.learning_rate.append(lr)
        if val_acc > best_acc:
            best_acc, best_params = val_acc, copy.deepcopy(params)
            history.best_epoch = epoch
        sched.step(val_loss)
        if log:
            log(f"epoch {epoch:3d} lr {lr:.2e} train {total / n:.4f} "
                f"val {val_loss:.4f} acc {val_acc:.4f}")

    trained = model.copy()
    trained.params = best_params
    return trained, history
