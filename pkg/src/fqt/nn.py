"""Minimal classical neural-network engine on flat weight vectors.

Models are immutable layer lists; all parameters live in one flat float64
vector, packed layer-major (weights row-major, then bias). Because the
weights of the target model are *generated* rather than owned, every
operation here is a pure function of (spec, omega, inputs); there is no
hidden state, no dropout, no batch norm.

Also owns the exported weight-file format (magic ``FQTW``): u16 version,
u64 length m, then m little-endian float32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Dense",
    "Conv2d",
    "MaxPool2d",
    "Relu",
    "Tanh",
    "Flatten",
    "ModelSpec",
    "AdamState",
    "WeightFormatError",
    "param_count",
    "output_shapes",
    "unpack",
    "pack",
    "forward",
    "forward_tape",
    "backward_tape",
    "loss_and_grad",
    "accuracy",
    "init_params",
    "adam_init",
    "optimizer_step",
    "mlp_tiny",
    "vgg_small",
    "build_preset",
    "save_weights",
    "load_weights",
]


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    bias: bool = True


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    bias: bool = True


@dataclass(frozen=True)
class MaxPool2d:
    kernel_size: int


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Tanh:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


Layer = Union[Dense, Conv2d, MaxPool2d, Relu, Tanh, Flatten]


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]


def output_shapes(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Per-layer output shapes (without batch axis); validates composition."""
    shapes = [tuple(spec.input_shape)]
    for i, layer in enumerate(spec.layers):
        s = shapes[-1]
        if isinstance(layer, Dense):
            if s != (layer.in_features,):
                raise ValueError(f"layer {i}: Dense expects shape ({layer.in_features},), got {s}")
            shapes.append((layer.out_features,))
        elif isinstance(layer, Conv2d):
            if len(s) != 3 or s[0] != layer.in_channels:
                raise ValueError(f"layer {i}: Conv2d expects ({layer.in_channels}, H, W), got {s}")
            h = (s[1] + 2 * layer.padding - layer.kernel_size) // layer.stride + 1
            w = (s[2] + 2 * layer.padding - layer.kernel_size) // layer.stride + 1
            if h < 1 or w < 1:
                raise ValueError(f"layer {i}: Conv2d output would be empty for input {s}")
            shapes.append((layer.out_channels, h, w))
        elif isinstance(layer, MaxPool2d):
            if len(s) != 3:
                raise ValueError(f"layer {i}: MaxPool2d expects (C, H, W), got {s}")
            k = layer.kernel_size
            if s[1] < k or s[2] < k:
                raise ValueError(f"layer {i}: MaxPool2d window {k} too large for input {s}")
            shapes.append((s[0], s[1] // k, s[2] // k))
        elif isinstance(layer, (Relu, Tanh)):
            shapes.append(s)
        elif isinstance(layer, Flatten):
            shapes.append((int(np.prod(s)),))
        else:
            raise ValueError(f"layer {i}: unknown layer {layer!r}")
    return shapes


def _layer_param_shapes(layer: Layer):
    if isinstance(layer, Dense):
        return (layer.out_features, layer.in_features), ((layer.out_features,) if layer.bias else None)
    if isinstance(layer, Conv2d):
        w = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
        return w, ((layer.out_channels,) if layer.bias else None)
    return None


def param_count(spec: ModelSpec) -> int:
    """Total number of trainable parameters."""
    output_shapes(spec)  # composition check
    total = 0
    for layer in spec.layers:
        ps = _layer_param_shapes(layer)
        if ps is not None:
            wshape, bshape = ps
            total += int(np.prod(wshape)) + (bshape[0] if bshape else 0)
    return total


def unpack(spec: ModelSpec, omega: np.ndarray) -> list:
    """Split the flat vector into per-layer (weight, bias) views."""
    omega = np.asarray(omega, dtype=float)
    m = param_count(spec)
    if omega.shape != (m,):
        raise ValueError(f"omega must have shape ({m},), got {omega.shape}")
    parts = []
    pos = 0
    for layer in spec.layers:
        ps = _layer_param_shapes(layer)
        if ps is None:
            parts.append(None)
            continue
        wshape, bshape = ps
        wn = int(np.prod(wshape))
        w = omega[pos : pos + wn].reshape(wshape)
        pos += wn
        b = None
        if bshape:
            b = omega[pos : pos + bshape[0]]
            pos += bshape[0]
        parts.append((w, b))
    return parts


def pack(spec: ModelSpec, parts: list) -> np.ndarray:
    """Inverse of unpack."""
    chunks = []
    for part in parts:
        if part is None:
            continue
        w, b = part
        chunks.append(np.asarray(w, dtype=float).ravel())
        if b is not None:
            chunks.append(np.asarray(b, dtype=float).ravel())
    omega = np.concatenate(chunks) if chunks else np.zeros(0)
    if omega.shape != (param_count(spec),):
        raise ValueError("packed parameter count does not match the spec")
    return omega


# ---------------------------------------------------------------------------
# forward / backward


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    B, C = xp.shape[:2]
    cols = np.empty((B, C, k, k, ho, wo))
    for dy in range(k):
        for dx in range(k):
            cols[:, :, dy, dx] = xp[:, :, dy : dy + stride * ho : stride, dx : dx + stride * wo : stride]
    return cols


def forward_tape(spec: ModelSpec, omega: np.ndarray, inputs: np.ndarray):
    """Forward pass keeping what the backward pass needs.

    inputs is (batch, *input_shape); returns (outputs, tape).
    """
    params = unpack(spec, omega)
    x = np.asarray(inputs, dtype=float)
    if x.ndim != len(spec.input_shape) + 1 or x.shape[1:] != tuple(spec.input_shape):
        raise ValueError(f"inputs must be (batch, *{spec.input_shape}), got {x.shape}")
    records = []
    for layer, part in zip(spec.layers, params):
        if isinstance(layer, Dense):
            w, b = part
            records.append(x)
            x = x @ w.T
            if b is not None:
                x = x + b
        elif isinstance(layer, Conv2d):
            w, b = part
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
            ho = (xp.shape[2] - k) // s + 1
            wo = (xp.shape[3] - k) // s + 1
            cols = _im2col(xp, k, s, ho, wo)
            records.append((cols, x.shape))
            x = np.einsum("ocij,bcijhw->bohw", w, cols)
            if b is not None:
                x = x + b[:, None, None]
        elif isinstance(layer, MaxPool2d):
            k = layer.kernel_size
            B, C, H, W = x.shape
            ho, wo = H // k, W // k
            win = (
                x[:, :, : ho * k, : wo * k]
                .reshape(B, C, ho, k, wo, k)
                .transpose(0, 1, 2, 4, 3, 5)
                .reshape(B, C, ho, wo, k * k)
            )
            idx = win.argmax(axis=-1)
            records.append((idx, x.shape))
            x = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        elif isinstance(layer, Relu):
            records.append(x > 0)
            x = np.maximum(x, 0.0)
        elif isinstance(layer, Tanh):
            x = np.tanh(x)
            records.append(x)
        elif isinstance(layer, Flatten):
            records.append(x.shape)
            x = x.reshape(x.shape[0], -1)
    return x, (spec, params, records)


def forward(spec: ModelSpec, omega: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Pure forward pass; repeated calls agree bitwise."""
    return forward_tape(spec, omega, inputs)[0]


def backward_tape(tape, d_out: np.ndarray):
    """Reverse pass. Returns (d_omega, d_inputs) for the taped forward."""
    spec, params, records = tape
    d = np.asarray(d_out, dtype=float)
    grads: list = [None] * len(spec.layers)
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, part, rec = spec.layers[i], params[i], records[i]
        if isinstance(layer, Dense):
            w, b = part
            x = rec
            dw = d.T @ x
            db = d.sum(axis=0) if b is not None else None
            grads[i] = (dw, db)
            d = d @ w
        elif isinstance(layer, Conv2d):
            w, b = part
            cols, in_shape = rec
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            dw = np.einsum("bohw,bcijhw->ocij", d, cols)
            db = d.sum(axis=(0, 2, 3)) if b is not None else None
            grads[i] = (dw, db)
            dcols = np.einsum("ocij,bohw->bcijhw", w, d)
            B, C, H, W = in_shape
            dxp = np.zeros((B, C, H + 2 * p, W + 2 * p))
            ho, wo = d.shape[2], d.shape[3]
            for dy in range(k):
                for dx in range(k):
                    dxp[:, :, dy : dy + s * ho : s, dx : dx + s * wo : s] += dcols[:, :, dy, dx]
            d = dxp[:, :, p : p + H, p : p + W] if p else dxp
        elif isinstance(layer, MaxPool2d):
            idx, in_shape = rec
            k = layer.kernel_size
            B, C, H, W = in_shape
            ho, wo = H // k, W // k
            dwin = np.zeros((B, C, ho, wo, k * k))
            np.put_along_axis(dwin, idx[..., None], d[..., None], axis=-1)
            dx = np.zeros(in_shape)
            dx[:, :, : ho * k, : wo * k] = (
                dwin.reshape(B, C, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, ho * k, wo * k)
            )
            d = dx
        elif isinstance(layer, Relu):
            d = d * rec
        elif isinstance(layer, Tanh):
            d = d * (1.0 - rec * rec)
        elif isinstance(layer, Flatten):
            d = d.reshape(rec)
    d_omega = pack(spec, grads)
    return d_omega, d


def _softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean loss over the batch and the gradient with respect to logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    sumz = expz.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sumz)
    n = logits.shape[0]
    loss = -float(log_probs[np.arange(n), labels].mean())
    d_logits = expz / sumz
    d_logits[np.arange(n), labels] -= 1.0
    return loss, d_logits / n


def loss_and_grad(spec: ModelSpec, omega: np.ndarray, inputs: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient with respect to omega."""
    labels = np.asarray(labels)
    logits, tape = forward_tape(spec, omega, inputs)
    if labels.shape != (logits.shape[0],):
        raise ValueError(f"labels must have shape ({logits.shape[0]},), got {labels.shape}")
    loss, d_logits = _softmax_cross_entropy(logits, labels)
    d_omega, _ = backward_tape(tape, d_logits)
    return loss, d_omega


def accuracy(spec: ModelSpec, omega: np.ndarray, inputs: np.ndarray, labels: np.ndarray, batch: int = 256) -> float:
    """Fraction of argmax-correct predictions, evaluated in chunks."""
    labels = np.asarray(labels)
    correct = 0
    for lo in range(0, len(labels), batch):
        logits = forward(spec, omega, inputs[lo : lo + batch])
        correct += int((logits.argmax(axis=1) == labels[lo : lo + batch]).sum())
    return correct / len(labels)


def mean_loss(spec: ModelSpec, omega: np.ndarray, inputs: np.ndarray, labels: np.ndarray, batch: int = 256) -> float:
    """Mean cross-entropy over a full set, evaluated in chunks."""
    labels = np.asarray(labels)
    total = 0.0
    for lo in range(0, len(labels), batch):
        logits = forward(spec, omega, inputs[lo : lo + batch])
        chunk_labels = labels[lo : lo + batch]
        loss, _ = _softmax_cross_entropy(logits, chunk_labels)
        total += loss * len(chunk_labels)
    return total / len(labels)


# ---------------------------------------------------------------------------
# initialization and optimizer


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Symmetric uniform fan-in initialization, bound 1/sqrt(fan_in)."""
    parts = []
    for layer in spec.layers:
        ps = _layer_param_shapes(layer)
        if ps is None:
            parts.append(None)
            continue
        wshape, bshape = ps
        fan_in = int(np.prod(wshape[1:]))
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=wshape)
        b = rng.uniform(-bound, bound, size=bshape) if bshape else None
        parts.append((w, b))
    return pack(spec, parts)


@dataclass
class AdamState:
    """Adam moments for one flat parameter vector."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    step: int
    m: np.ndarray
    v: np.ndarray
    method: str = "adam"


def adam_init(n_params: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step=0, m=np.zeros(n_params), v=np.zeros(n_params))


def optimizer_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One Adam update; mutates the moment accumulators, returns new params."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != state.m.shape or grads.shape != state.m.shape:
        raise ValueError(f"expected shape {state.m.shape}, got params {params.shape}, grads {grads.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# target-model presets


def mlp_tiny(input_dim: int, n_classes: int, hidden: tuple[int, ...] = (32, 16)) -> ModelSpec:
    """Small dense classifier for desk-scale runs (a few hundred weights)."""
    layers: list[Layer] = []
    prev = input_dim
    for h in hidden:
        layers += [Dense(prev, h), Relu()]
        prev = h
    layers.append(Dense(prev, n_classes))
    return ModelSpec(input_shape=(input_dim,), layers=tuple(layers))


def vgg_small(n_classes: int = 10) -> ModelSpec:
    """Two conv blocks plus a dense head for 3x32x32 images.

    Parameter ledger (weights + bias):
      conv 3->32 k3 p1     3*32*9  + 32 =    896
      conv 32->32 k3 p1   32*32*9  + 32 =   9248
      conv 32->64 k3 p1   32*64*9  + 64 =  18496
      conv 64->64 k3 p1   64*64*9  + 64 =  36928
      dense 4096->53      4096*53  + 53 = 217141
      dense 53->10          53*10  + 10 =    540
      total                              283249
    """
    return ModelSpec(
        input_shape=(3, 32, 32),
        layers=(
            Conv2d(3, 32, 3, padding=1),
            Relu(),
            Conv2d(32, 32, 3, padding=1),
            Relu(),
            MaxPool2d(2),
            Conv2d(32, 64, 3, padding=1),
            Relu(),
            Conv2d(64, 64, 3, padding=1),
            Relu(),
            MaxPool2d(2),
            Flatten(),
            Dense(64 * 8 * 8, 53),
            Relu(),
            Dense(53, n_classes),
        ),
    )


def build_preset(name: str, *, input_dim: int = 8, n_classes: int = 3, hidden: tuple[int, ...] = (32, 16)) -> ModelSpec:
    """Preset registry used by the CLI and the inference path."""
    if name == "mlp_tiny":
        return mlp_tiny(input_dim, n_classes, hidden)
    if name == "vgg_small":
        return vgg_small(n_classes)
    raise ValueError(f"unknown model preset {name!r} (expected mlp_tiny or vgg_small)")


# ---------------------------------------------------------------------------
# weight-file format


WEIGHT_MAGIC = b"FQTW"
WEIGHT_VERSION = 1
_HEADER = struct.Struct("<4sHQ")


class WeightFormatError(ValueError):
    """Raised when a weight file does not match the FQTW layout."""


def save_weights(path, omega: np.ndarray) -> None:
    """Write omega as float32 in the FQTW container."""
    omega = np.asarray(omega)
    if omega.ndim != 1:
        raise ValueError(f"omega must be a flat vector, got shape {omega.shape}")
    data = omega.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WEIGHT_MAGIC, WEIGHT_VERSION, omega.size))
        fh.write(data)


def load_weights(path) -> np.ndarray:
    """Read an FQTW file; returns the float32 vector."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise WeightFormatError(f"{path}: file too short for the FQTW header")
    magic, version, m = _HEADER.unpack_from(blob)
    if magic != WEIGHT_MAGIC:
        raise WeightFormatError(f"{path}: bad magic {magic!r}, expected {WEIGHT_MAGIC!r}")
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 4 * m
    if len(blob) != expected:
        raise WeightFormatError(f"{path}: expected {expected} bytes for m={m}, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).copy()
