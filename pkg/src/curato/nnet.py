"""Minimal deterministic neural-network trainer on numpy.

Dense and 2-D convolution layers, batch normalization, max pooling, SGD
with momentum and L2 weight decay, penultimate-layer feature extraction,
and simulated K-worker data-parallel steps. The reference numeric path is
float64 throughout; training is bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .dataset import Batch, FeatureDataset
from .errors import BadMagicError, TruncatedFileError, ValidationError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9  # running = m*running + (1-m)*batch

DENSE = "dense"
CONV2D = "conv2d"
BATCHNORM = "batchnorm"
RELU = "relu"
MAXPOOL2D = "maxpool2d"
FLATTEN = "flatten"
HEAD = "softmax_xent_head"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    n_in: int = 0
    n_out: int = 0
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    window: int = 0


def dense(n_in: int, n_out: int) -> LayerSpec:
    if n_in < 1 or n_out < 1:
        raise ValidationError("dense dims must be >= 1")
    return LayerSpec(DENSE, n_in=n_in, n_out=n_out)


def conv2d(in_ch: int, out_ch: int, kernel: int, stride: int = 1, pad: int = 0) -> LayerSpec:
    if min(in_ch, out_ch, kernel, stride) < 1 or pad < 0:
        raise ValidationError("bad conv2d shape params")
    return LayerSpec(CONV2D, in_ch=in_ch, out_ch=out_ch, kernel=kernel, stride=stride, pad=pad)


def batchnorm() -> LayerSpec:
    return LayerSpec(BATCHNORM)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def maxpool2d(window: int, stride: int | None = None) -> LayerSpec:
    if window < 1:
        raise ValidationError("maxpool window must be >= 1")
    return LayerSpec(MAXPOOL2D, window=window, stride=window if stride is None else stride)


def flatten() -> LayerSpec:
    return LayerSpec(FLATTEN)


def softmax_xent_head() -> LayerSpec:
    return LayerSpec(HEAD)


@dataclass(frozen=True)
class Model:
    """Layer stack plus input shape; validated so consecutive shapes compose."""

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        kinds = [l.kind for l in self.layers]
        if kinds.count(HEAD) != 1 or kinds[-1] != HEAD:
            raise ValidationError("model needs exactly one head, last")
        if len(self.layers) < 2 or self.layers[-2].kind != DENSE:
            raise ValidationError("layer before the head must be a dense classifier")
        if self.layers[-2].n_out != self.class_count:
            raise ValidationError("classifier width must equal class_count")
        infer_shapes(self.layers, self.input_shape)  # raises on mismatch

    @property
    def penultimate_width(self) -> int:
        """Width of the feature vector entering the dense classifier."""
        if len(self.layers) == 2:
            raise ValidationError("model lacks a penultimate layer (single-layer net)")
        return self.layers[-2].n_in


def infer_shapes(layers, input_shape) -> list[tuple[int, ...]]:
    """Per-boundary shapes: result[i] is the input shape of layer i."""
    shapes = [tuple(input_shape)]
    shape = tuple(input_shape)
    for i, layer in enumerate(layers):
        k = layer.kind
        if k == DENSE:
            if len(shape) != 1 or shape[0] != layer.n_in:
                raise ValidationError(f"layer {i}: dense expects ({layer.n_in},), got {shape}")
            shape = (layer.n_out,)
        elif k == CONV2D:
            if len(shape) != 3 or shape[0] != layer.in_ch:
                raise ValidationError(f"layer {i}: conv2d expects ({layer.in_ch},h,w), got {shape}")
            _, h, w = shape
            oh, rem_h = divmod(h + 2 * layer.pad - layer.kernel, layer.stride)
            ow, rem_w = divmod(w + 2 * layer.pad - layer.kernel, layer.stride)
            if rem_h or rem_w or oh < 0 or ow < 0:
                raise ValidationError(f"layer {i}: conv2d does not tile input {shape}")
            shape = (layer.out_ch, oh + 1, ow + 1)
        elif k == MAXPOOL2D:
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: maxpool2d expects (c,h,w), got {shape}")
            c, h, w = shape
            oh, rem_h = divmod(h - layer.window, layer.stride)
            ow, rem_w = divmod(w - layer.window, layer.stride)
            if rem_h or rem_w or oh < 0 or ow < 0:
                raise ValidationError(f"layer {i}: maxpool2d does not tile input {shape}")
            shape = (c, oh + 1, ow + 1)
        elif k == FLATTEN:
            shape = (int(np.prod(shape)),)
        elif k in (BATCHNORM, RELU):
            if k == BATCHNORM and len(shape) not in (1, 3):
                raise ValidationError(f"layer {i}: batchnorm expects 1-D or 3-D input")
            pass
        elif k == HEAD:
            if len(shape) != 1:
                raise ValidationError(f"layer {i}: head expects logits vector, got {shape}")
        else:
            raise ValidationError(f"unknown layer kind {k!r}")
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    mode: str = "train"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValidationError("weight decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("batch_size >= 1, epochs >= 0 required")
        if self.mode not in ("train", "eval"):
            raise ValidationError("mode must be train or eval")


# Canonical per-kind tensor order; also the checkpoint serialization order.
TENSOR_ORDER = {
    DENSE: ("W", "b"),
    CONV2D: ("K", "b"),
    BATCHNORM: ("gamma", "beta", "running_mean", "running_var", "eps"),
}
# Tensors receiving gradients; weight decay touches only the DECAYED set.
LEARNABLE = {DENSE: ("W", "b"), CONV2D: ("K", "b"), BATCHNORM: ("gamma", "beta")}
DECAYED = {DENSE: ("W",), CONV2D: ("K",)}


@dataclass
class ParameterSet:
    """Per-layer tensors, parallel to Model.layers. float64."""

    tensors: list[dict]

    def copy(self) -> "ParameterSet":
        return ParameterSet([{k: v.copy() for k, v in t.items()} for t in self.tensors])


def init_params(model: Model, seed: int) -> ParameterSet:
    """He fan-in init for weights; BN gamma=1, beta=0."""
    gen = rng.seeded(seed, "init")
    shapes = infer_shapes(model.layers, model.input_shape)
    tensors: list[dict] = []
    for i, layer in enumerate(model.layers):
        k = layer.kind
        if k == DENSE:
            scale = np.sqrt(2.0 / layer.n_in)
            tensors.append({
                "W": gen.normal(0.0, scale, size=(layer.n_in, layer.n_out)),
                "b": np.zeros(layer.n_out),
            })
        elif k == CONV2D:
            fan_in = layer.in_ch * layer.kernel * layer.kernel
            scale = np.sqrt(2.0 / fan_in)
            tensors.append({
                "K": gen.normal(0.0, scale, size=(layer.out_ch, layer.in_ch,
                                                  layer.kernel, layer.kernel)),
                "b": np.zeros(layer.out_ch),
            })
        elif k == BATCHNORM:
            width = shapes[i][0]
            tensors.append({
                "gamma": np.ones(width),
                "beta": np.zeros(width),
                "running_mean": np.zeros(width),
                "running_var": np.ones(width),
                "eps": np.array(BN_EPS),
            })
        else:
            tensors.append({})
    return ParameterSet(tensors)


def zero_velocity(params: ParameterSet) -> ParameterSet:
    return ParameterSet([
        {k: np.zeros_like(v) for k, v in t.items()} for t in params.tensors
    ])


def batchnorm_forward(x: np.ndarray, params: dict, mode: str,
                      update_running: bool = True):
    """Normalize per feature (dense) or per channel over b*p*q (conv).

    Train mode uses batch statistics and updates the running estimates;
    eval mode normalizes with the running estimates.
    """
    eps = float(params["eps"])
    if eps <= 0:
        raise ValidationError("batchnorm eps must be > 0")
    if x.ndim == 2:
        axes, bshape = (0,), (1, -1)
        if mode == "train" and x.shape[0] < 2:
            raise ValidationError(
                "batchnorm needs batch size >= 2 in train mode (variance undefined)")
    elif x.ndim == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    else:
        raise ValidationError(f"batchnorm expects 2-D or 4-D input, got {x.ndim}-D")

    gamma = params["gamma"].reshape(bshape)
    beta = params["beta"].reshape(bshape)
    if mode == "train":
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var.reshape(bshape) + eps)
        xhat = (x - mu.reshape(bshape)) * inv_std
        if update_running:
            params["running_mean"] = BN_MOMENTUM * params["running_mean"] + (1 - BN_MOMENTUM) * mu
            params["running_var"] = BN_MOMENTUM * params["running_var"] + (1 - BN_MOMENTUM) * var
        m = x.size // x.shape[1] if x.ndim == 4 else x.shape[0]
        cache = {"xhat": xhat, "inv_std": inv_std, "gamma": gamma, "axes": axes,
                 "bshape": bshape, "m": m}
    else:
        inv_std = 1.0 / np.sqrt(params["running_var"].reshape(bshape) + eps)
        xhat = (x - params["running_mean"].reshape(bshape)) * inv_std
        cache = None
    return gamma * xhat + beta, cache


def _im2col(x: np.ndarray, kernel: int, stride: int, pad: int):
    """(b,c,h,w) -> (b, oh*ow, c*k*k) patch matrix."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    view = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (b, c, oh, ow, k, k)
    b, c, oh, ow = view.shape[:4]
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kernel * kernel)
    return np.ascontiguousarray(cols), (oh, ow, x.shape)


def _col2im(dcols: np.ndarray, padded_shape, oh: int, ow: int,
            kernel: int, stride: int, pad: int):
    b, c = padded_shape[0], padded_shape[1]
    dx = np.zeros(padded_shape)
    d6 = dcols.reshape(b, oh, ow, c, kernel, kernel).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kernel):
        for j in range(kernel):
            dx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += d6[:, :, :, :, i, j]
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx


def _conv_forward(x, layer: LayerSpec, params: dict):
    cols, (oh, ow, padded_shape) = _im2col(x, layer.kernel, layer.stride, layer.pad)
    kmat = params["K"].reshape(layer.out_ch, -1)
    out = cols @ kmat.T + params["b"]
    y = out.transpose(0, 2, 1).reshape(x.shape[0], layer.out_ch, oh, ow)
    cache = {"cols": cols, "oh": oh, "ow": ow, "padded_shape": padded_shape}
    return y, cache


def _conv_backward(dy, layer: LayerSpec, params: dict, cache: dict):
    b = dy.shape[0]
    dmat = dy.reshape(b, layer.out_ch, -1).transpose(0, 2, 1)  # (b, oh*ow, out_ch)
    kmat = params["K"].reshape(layer.out_ch, -1)
    dk = np.einsum("bpo,bpi->oi", dmat, cache["cols"])
    db = dmat.sum(axis=(0, 1))
    dcols = dmat @ kmat
    dx = _col2im(dcols, cache["padded_shape"], cache["oh"], cache["ow"],
                 layer.kernel, layer.stride, layer.pad)
    return dx, {"K": dk.reshape(params["K"].shape), "b": db}


def _maxpool_forward(x, layer: LayerSpec):
    w, s = layer.window, layer.stride
    view = np.lib.stride_tricks.sliding_window_view(x, (w, w), axis=(2, 3))[:, :, ::s, ::s]
    b, c, oh, ow = view.shape[:4]
    flat = view.reshape(b, c, oh, ow, w * w)
    arg = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return y, {"arg": arg, "in_shape": x.shape, "oh": oh, "ow": ow}


def _maxpool_backward(dy, layer: LayerSpec, cache: dict):
    w, s = layer.window, layer.stride
    b, c, oh, ow = dy.shape
    arg = cache["arg"]
    bi, ci, oi, oj = np.indices((b, c, oh, ow))
    hi = oi * s + arg // w
    wi = oj * s + arg % w
    dx = np.zeros(cache["in_shape"])
    np.add.at(dx, (bi, ci, hi, wi), dy)
    return dx


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: Model, params: ParameterSet, x: np.ndarray,
            labels: np.ndarray | None, mode: str = "train",
            update_running: bool = True):
    """Run the stack; returns (logits, loss, caches).

    Loss is mean softmax cross-entropy over the batch. In eval mode BN
    uses running statistics and caches are not kept.
    """
    x = np.asarray(x, dtype=np.float64)
    expect = (x.shape[0],) + model.input_shape
    if x.shape != expect:
        if len(model.input_shape) == 3 and x.ndim == 2 and x.shape[1] == int(np.prod(model.input_shape)):
            x = x.reshape(expect)
        else:
            raise ValidationError(f"batch shape {x.shape} does not match input {expect}")
    caches = []
    keep = mode == "train"
    for layer, tensors in zip(model.layers, params.tensors):
        k = layer.kind
        if k == DENSE:
            caches.append({"x": x} if keep else None)
            x = x @ tensors["W"] + tensors["b"]
        elif k == CONV2D:
            x, cache = _conv_forward(x, layer, tensors)
            caches.append(cache if keep else None)
        elif k == BATCHNORM:
            x, cache = batchnorm_forward(x, tensors, mode, update_running=update_running)
            caches.append(cache if keep else None)
        elif k == RELU:
            mask = x > 0
            caches.append({"mask": mask} if keep else None)
            x = x * mask
        elif k == MAXPOOL2D:
            x, cache = _maxpool_forward(x, layer)
            caches.append(cache if keep else None)
        elif k == FLATTEN:
            caches.append({"shape": x.shape} if keep else None)
            x = x.reshape(x.shape[0], -1)
        elif k == HEAD:
            logits = x
            if labels is None:
                raise ValidationError("labels required to compute the head loss")
            y = np.asarray(labels, dtype=np.int64)
            if y.shape[0] != logits.shape[0]:
                raise ValidationError("labels length does not match batch")
            zmax = logits.max(axis=1)
            lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
            loss = float(np.mean(lse - logits[np.arange(len(y)), y]))
            caches.append({"probs": _softmax(logits), "labels": y} if keep else None)
            return logits, loss, caches
    raise AssertionError("unreachable: model has no head")


def backward(model: Model, params: ParameterSet, caches: list) -> list[dict]:
    """Gradients for every learnable tensor, from forward-pass caches."""
    if len(caches) != len(model.layers) or caches[-1] is None:
        raise ValidationError("stale or missing caches (run forward in train mode)")
    grads: list[dict] = [dict() for _ in model.layers]
    head = caches[-1]
    b = head["probs"].shape[0]
    dy = head["probs"].copy()
    dy[np.arange(b), head["labels"]] -= 1.0
    dy /= b
    for i in range(len(model.layers) - 2, -1, -1):
        layer, tensors, cache = model.layers[i], params.tensors[i], caches[i]
        k = layer.kind
        if cache is None:
            raise ValidationError("stale cache: layer missing from forward pass")
        if k == DENSE:
            grads[i] = {"W": cache["x"].T @ dy, "b": dy.sum(axis=0)}
            dy = dy @ tensors["W"].T
        elif k == CONV2D:
            dy, grads[i] = _conv_backward(dy, layer, tensors, cache)
        elif k == BATCHNORM:
            xhat, inv_std, gamma = cache["xhat"], cache["inv_std"], cache["gamma"]
            axes, bshape, m = cache["axes"], cache["bshape"], cache["m"]
            grads[i] = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
            dxhat = dy * gamma
            dy = (inv_std / m) * (
                m * dxhat
                - dxhat.sum(axis=axes).reshape(bshape)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        elif k == RELU:
            dy = dy * cache["mask"]
        elif k == MAXPOOL2D:
            dy = _maxpool_backward(dy, layer, cache)
        elif k == FLATTEN:
            dy = dy.reshape(cache["shape"])
    return grads


def sgd_step(model: Model, params: ParameterSet, grads: list[dict],
             cfg: TrainConfig, velocity: ParameterSet):
    """v <- mu*v - eta*(g + lambda*w); w <- w + v.

    Weight decay applies to dense/conv weights only, never to biases or
    BN gamma/beta. Returns (params', velocity'); inputs are not mutated.
    """
    new_p, new_v = [], []
    for layer, t, g, v in zip(model.layers, params.tensors, grads, velocity.tensors):
        pt, vt = {}, {}
        decayed = DECAYED.get(layer.kind, ())
        learnable = LEARNABLE.get(layer.kind, ())
        for key, w in t.items():
            if key in learnable:
                grad = g[key] + (cfg.weight_decay * w if key in decayed else 0.0)
                vel = cfg.momentum * v[key] - cfg.learning_rate * grad
                pt[key] = w + vel
                vt[key] = vel
            else:
                pt[key] = w.copy()
                vt[key] = np.zeros_like(w)
        new_p.append(pt)
        new_v.append(vt)
    return ParameterSet(new_p), ParameterSet(new_v)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def _as_training_arrays(model: Model, ds: FeatureDataset):
    if ds.labels is None:
        raise ValidationError("training requires a labeled dataset")
    if ds.class_count != model.class_count:
        raise ValidationError(
            f"dataset has {ds.class_count} classes, model expects {model.class_count}")
    x = ds.values.astype(np.float64)
    if len(model.input_shape) == 3:
        x = x.reshape((ds.n,) + model.input_shape)
    return x, ds.labels.astype(np.int64)


def evaluate(model: Model, params: ParameterSet, ds: FeatureDataset,
             batch_size: int = 512) -> tuple[float, float]:
    """(mean loss, accuracy) in eval mode."""
    x, y = _as_training_arrays(model, ds)
    total_loss = 0.0
    correct = 0
    for lo in range(0, ds.n, batch_size):
        hi = min(lo + batch_size, ds.n)
        logits, loss, _ = forward(model, params, x[lo:hi], y[lo:hi], mode="eval")
        total_loss += loss * (hi - lo)
        correct += int(np.count_nonzero(logits.argmax(axis=1) == y[lo:hi]))
    return total_loss / ds.n, correct / ds.n


def train(model: Model, ds: FeatureDataset, cfg: TrainConfig):
    """Mini-batch SGD; returns (params, per-epoch EpochStats history).

    Deterministic for a fixed seed: init and epoch shuffles come from the
    module PRNG. A trailing partial batch is kept unless it has a single
    example (BN train mode needs >= 2).
    """
    x, y = _as_training_arrays(model, ds)
    params = init_params(model, cfg.seed)
    velocity = zero_velocity(params)
    gen = rng.seeded(cfg.seed, "shuffle")
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        perm = gen.permutation(ds.n)
        seen = 0
        loss_sum = 0.0
        for lo in range(0, ds.n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            if len(idx) < 2 and cfg.batch_size > 1:
                continue
            _, loss, caches = forward(model, params, x[idx], y[idx], mode="train")
            grads = backward(model, params, caches)
            params, velocity = sgd_step(model, params, grads, cfg, velocity)
            loss_sum += loss * len(idx)
            seen += len(idx)
        _, acc = evaluate(model, params, ds)
        history.append(EpochStats(epoch=epoch, loss=loss_sum / max(seen, 1), accuracy=acc))
    return params, history


def train_batches(ds: FeatureDataset, batch_size: int) -> list[Batch]:
    """Contiguous batch views covering the dataset, for inspection/tests."""
    return [Batch(ds, lo, min(batch_size, ds.n - lo)) for lo in range(0, ds.n, batch_size)]


def extract_features(model: Model, params: ParameterSet, ds: FeatureDataset,
                     batch_size: int = 512) -> np.ndarray:
    """Penultimate activations per example, eval mode, order preserved.

    The features are the inputs to the final dense classifier (the layer
    feeding the softmax head).
    """
    width = model.penultimate_width  # raises for single-layer nets
    x = ds.values.astype(np.float64)
    if len(model.input_shape) == 3:
        x = x.reshape((ds.n,) + model.input_shape)
    sub_layers = model.layers[:-2]
    out = np.empty((ds.n, width))
    for lo in range(0, ds.n, batch_size):
        hi = min(lo + batch_size, ds.n)
        h = x[lo:hi]
        for layer, tensors in zip(sub_layers, params.tensors):
            k = layer.kind
            if k == DENSE:
                h = h @ tensors["W"] + tensors["b"]
            elif k == CONV2D:
                h, _ = _conv_forward(h, layer, tensors)
            elif k == BATCHNORM:
                h, _ = batchnorm_forward(h, tensors, "eval")
            elif k == RELU:
                h = np.maximum(h, 0.0)
            elif k == MAXPOOL2D:
                h, _ = _maxpool_forward(h, layer)
            elif k == FLATTEN:
                h = h.reshape(h.shape[0], -1)
        out[lo:hi] = h
    return out


def data_parallel_step(model: Model, params: ParameterSet, x: np.ndarray,
                       y: np.ndarray, workers: int, cfg: TrainConfig,
                       velocity: ParameterSet):
    """One simulated K-worker data-parallel SGD step.

    The global batch is split into K contiguous shards; each worker runs
    forward/backward on its shard with shard-local BN statistics. Shard
    gradients (and BN running-stat updates) are averaged in ascending
    worker order, then a single SGD step is applied.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    b = x.shape[0]
    if workers < 1 or b % workers:
        raise ValidationError(f"batch size {b} not divisible by {workers} workers")
    shard = b // workers
    grad_sum: list[dict] | None = None
    running_sums: list[dict] = [dict() for _ in model.layers]
    for k in range(workers):
        lo = k * shard
        work = params.copy()  # shard-local BN running updates
        _, _, caches = forward(model, work, x[lo:lo + shard], y[lo:lo + shard], mode="train")
        grads = backward(model, work, caches)
        if grad_sum is None:
            grad_sum = [{key: g.copy() for key, g in layer.items()} for layer in grads]
        else:
            for acc, layer in zip(grad_sum, grads):
                for key, g in layer.items():
                    acc[key] += g
        for i, layer in enumerate(model.layers):
            if layer.kind == BATCHNORM:
                for key in ("running_mean", "running_var"):
                    running_sums[i][key] = running_sums[i].get(key, 0.0) + work.tensors[i][key]
    grads = [{key: g / workers for key, g in layer.items()} for layer in grad_sum]
    new_params, new_velocity = sgd_step(model, params, grads, cfg, velocity)
    for i, layer in enumerate(model.layers):
        if layer.kind == BATCHNORM:
            for key in ("running_mean", "running_var"):
                new_params.tensors[i][key] = running_sums[i][key] / workers
    return new_params, new_velocity


NNP_MAGIC = b"NNP1"


def save_checkpoint(params: ParameterSet, model: Model, path) -> None:
    """Binary checkpoint: per-layer tensors in declaration order, each as
    u32 rank | u32 dims... | little-endian f64 data."""
    chunks = [NNP_MAGIC]
    for layer, tensors in zip(model.layers, params.tensors):
        for key in TENSOR_ORDER.get(layer.kind, ()):
            arr = np.asarray(tensors[key], dtype="<f8")
            chunks.append(struct.pack("<I", arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(model: Model, path) -> ParameterSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != NNP_MAGIC:
        raise BadMagicError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    offset = 4
    tensors: list[dict] = []
    reference = init_params(model, seed=0)
    for layer, ref in zip(model.layers, reference.tensors):
        loaded = {}
        for key in TENSOR_ORDER.get(layer.kind, ()):
            if offset + 4 > len(raw):
                raise TruncatedFileError(f"{path}: truncated checkpoint")
            (ndim,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            dims = struct.unpack_from(f"<{ndim}I", raw, offset)
            offset += 4 * ndim
            count = int(np.prod(dims)) if ndim else 1
            if offset + 8 * count > len(raw):
                raise TruncatedFileError(f"{path}: truncated checkpoint")
            arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(dims)
            offset += 8 * count
            if arr.shape != ref[key].shape:
                raise ValidationError(
                    f"{path}: tensor {key} shape {arr.shape} != expected {ref[key].shape}")
            loaded[key] = arr.copy()
        tensors.append(loaded)
    return ParameterSet(tensors)
