"""Minimal deterministic differentiable model evaluator.

Layers: dense, relu, conv2d (stride 1, zero padding), flatten, avgpool2d.
Forward evaluation and reverse-mode input gradients are pure functions of
the compiled weights; everything runs in float64 on single samples.

The ReLU subgradient at an exactly-zero pre-activation is 0, so gradients
are a fixed, testable choice everywhere (the non-differentiable set has
measure zero and never matters for the integrals downstream).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import as_array


class ModelFormatError(ValueError):
    """Malformed model document (bad JSON, unknown layer, bad field)."""


class ShapeError(ValueError):
    """Layer shapes do not compose, or an input does not match the model."""


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class Dense:
    def __init__(self, in_dim: int, out_dim: int, weights=None, bias=None):
        if in_dim < 1 or out_dim < 1:
            raise ShapeError("dense dimensions must be positive")
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.W = None if weights is None else self._check_w(weights)
        self.b = None if bias is None else self._check_b(bias)

    def _check_w(self, weights) -> np.ndarray:
        W = np.asarray(weights, dtype=np.float64).reshape(self.out_dim, self.in_dim)
        if not np.all(np.isfinite(W)):
            raise ModelFormatError("dense weights must be finite")
        return W

    def _check_b(self, bias) -> np.ndarray:
        b = np.asarray(bias, dtype=np.float64).reshape(self.out_dim)
        if not np.all(np.isfinite(b)):
            raise ModelFormatError("dense bias must be finite")
        return b

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(in_shape) != 1 or in_shape[0] != self.in_dim:
            raise ShapeError(f"dense({self.in_dim},{self.out_dim}) cannot take input shape {in_shape}")
        return (self.out_dim,)

    def init(self, rng: np.random.Generator) -> None:
        scale = np.sqrt(2.0 / self.in_dim)
        self.W = rng.normal(0.0, scale, size=(self.out_dim, self.in_dim))
        self.b = np.zeros(self.out_dim)

    def forward(self, x: np.ndarray):
        return self.W @ x + self.b, x

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        return self.W.T @ dy

    def param_grads(self, dy: np.ndarray, cache):
        return np.outer(dy, cache), dy

    def apply_update(self, dW, db, lr: float) -> None:
        self.W = self.W - lr * dW
        self.b = self.b - lr * db

    def to_record(self) -> dict:
        return {
            "type": "dense",
            "in": self.in_dim,
            "out": self.out_dim,
            "weights": None if self.W is None else self.W.ravel().tolist(),
            "bias": None if self.b is None else self.b.tolist(),
        }


class Relu:
    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x: np.ndarray):
        return np.where(x > 0.0, x, 0.0), x

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        return np.where(cache > 0.0, dy, 0.0)

    def to_record(self) -> dict:
        return {"type": "relu"}


class Conv2d:
    """3-D (channels, H, W) convolution, stride 1, zero padding k//2."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, weights=None, bias=None):
        if kernel < 1 or kernel % 2 == 0:
            raise ShapeError("conv2d kernel must be odd and positive")
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        self.k = int(kernel)
        self.pad = self.k // 2
        self.W = None if weights is None else self._check_w(weights)
        self.b = None if bias is None else self._check_b(bias)

    def _check_w(self, weights) -> np.ndarray:
        W = np.asarray(weights, dtype=np.float64).reshape(self.out_ch, self.in_ch, self.k, self.k)
        if not np.all(np.isfinite(W)):
            raise ModelFormatError("conv2d weights must be finite")
        return W

    def _check_b(self, bias) -> np.ndarray:
        b = np.asarray(bias, dtype=np.float64).reshape(self.out_ch)
        if not np.all(np.isfinite(b)):
            raise ModelFormatError("conv2d bias must be finite")
        return b

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_ch:
            raise ShapeError(f"conv2d expects ({self.in_ch}, H, W), got {in_shape}")
        return (self.out_ch, in_shape[1], in_shape[2])

    def init(self, rng: np.random.Generator) -> None:
        fan_in = self.in_ch * self.k * self.k
        self.W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(self.out_ch, self.in_ch, self.k, self.k))
        self.b = np.zeros(self.out_ch)

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        c, h, w = x.shape
        padded = np.zeros((c, h + 2 * self.pad, w + 2 * self.pad))
        padded[:, self.pad:self.pad + h, self.pad:self.pad + w] = x
        windows = np.lib.stride_tricks.sliding_window_view(padded, (self.k, self.k), axis=(1, 2))
        # (c, h, w, k, k) -> (c*k*k, h*w)
        return windows.transpose(0, 3, 4, 1, 2).reshape(c * self.k * self.k, h * w)

    def forward(self, x: np.ndarray):
        _, h, w = x.shape
        cols = self._im2col(x)
        out = self.W.reshape(self.out_ch, -1) @ cols + self.b[:, None]
        return out.reshape(self.out_ch, h, w), (x.shape, cols)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        (c, h, w), _ = cache
        dy_mat = dy.reshape(self.out_ch, h * w)
        dcols = self.W.reshape(self.out_ch, -1).T @ dy_mat
        dcols = dcols.reshape(c, self.k, self.k, h, w)
        dpad = np.zeros((c, h + 2 * self.pad, w + 2 * self.pad))
        for i in range(self.k):
            for j in range(self.k):
                dpad[:, i:i + h, j:j + w] += dcols[:, i, j]
        return dpad[:, self.pad:self.pad + h, self.pad:self.pad + w]

    def param_grads(self, dy: np.ndarray, cache):
        (_, h, w), cols = cache
        dy_mat = dy.reshape(self.out_ch, h * w)
        dW = (dy_mat @ cols.T).reshape(self.W.shape)
        return dW, dy_mat.sum(axis=1)

    def apply_update(self, dW, db, lr: float) -> None:
        self.W = self.W - lr * dW
        self.b = self.b - lr * db

    def to_record(self) -> dict:
        return {
            "type": "conv2d",
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "kernel": self.k,
            "weights": None if self.W is None else self.W.ravel().tolist(),
            "bias": None if self.b is None else self.b.tolist(),
        }


class Flatten:
    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x: np.ndarray):
        return x.ravel(), x.shape

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        return dy.reshape(cache)

    def to_record(self) -> dict:
        return {"type": "flatten"}


class AvgPool2d:
    def __init__(self, kernel: int):
        if kernel < 1:
            raise ShapeError("avgpool2d kernel must be positive")
        self.k = int(kernel)

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"avgpool2d expects (C, H, W), got {in_shape}")
        c, h, w = in_shape
        if h % self.k or w % self.k:
            raise ShapeError(f"avgpool2d({self.k}) needs H, W divisible by {self.k}, got {in_shape}")
        return (c, h // self.k, w // self.k)

    def forward(self, x: np.ndarray):
        c, h, w = x.shape
        y = x.reshape(c, h // self.k, self.k, w // self.k, self.k).mean(axis=(2, 4))
        return y, x.shape

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        c, h, w = cache
        up = np.repeat(np.repeat(dy, self.k, axis=1), self.k, axis=2)
        return up / (self.k * self.k)

    def to_record(self) -> dict:
        return {"type": "avgpool2d", "kernel": self.k}


_PARAM_LAYERS = (Dense, Conv2d)


# ---------------------------------------------------------------------------
# ModelSpec / Model
# ---------------------------------------------------------------------------


@dataclass
class ModelSpec:
    """Declarative layer list; weights may be absent (filled by training init)."""

    layers: list
    input_shape: tuple[int, ...]
    num_classes: int

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if any(d < 1 for d in self.input_shape):
            raise ShapeError(f"input shape must be positive, got {self.input_shape}")
        if self.num_classes < 1:
            raise ShapeError("num_classes must be >= 1")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape != (self.num_classes,):
            raise ShapeError(f"layers produce output shape {shape}, expected ({self.num_classes},)")

    def has_weights(self) -> bool:
        return all(l.W is not None and l.b is not None
                   for l in self.layers if isinstance(l, _PARAM_LAYERS))


class Model:
    """Compiled ModelSpec: pure, deterministic forward + input gradients."""

    def __init__(self, spec: ModelSpec):
        if not spec.has_weights():
            raise ModelFormatError("cannot compile a spec with missing weights (train or load them first)")
        self.spec = spec
        self.layers = spec.layers
        self.input_shape = spec.input_shape
        self.num_classes = spec.num_classes

    # -- evaluation --------------------------------------------------------

    def _check_input(self, x) -> np.ndarray:
        arr = as_array(x)
        if arr.shape != self.input_shape:
            if arr.size == int(np.prod(self.input_shape)):
                arr = arr.reshape(self.input_shape)
            else:
                raise ShapeError(f"input shape {arr.shape} does not match model input {self.input_shape}")
        return arr

    def _forward_cached(self, x: np.ndarray):
        caches = []
        h = x
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h, caches

    def forward_logits(self, x) -> np.ndarray:
        """Length-L logit vector for one input."""
        logits, _ = self._forward_cached(self._check_input(x))
        return logits

    def predict(self, x) -> int:
        return int(np.argmax(self.forward_logits(x)))

    def vjp(self, x, d_logits: np.ndarray) -> np.ndarray:
        """Input gradient for an arbitrary cotangent on the logits."""
        arr = self._check_input(x)
        _, caches = self._forward_cached(arr)
        g = np.asarray(d_logits, dtype=np.float64)
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            g = layer.backward(g, cache)
        return g

    def grad_input(self, x, class_index: int) -> np.ndarray:
        """d logits[class_index] / d x, shaped like the input."""
        if not 0 <= class_index < self.num_classes:
            raise IndexError(f"class index {class_index} out of range [0, {self.num_classes})")
        onehot = np.zeros(self.num_classes)
        onehot[class_index] = 1.0
        return self.vjp(x, onehot)

    def grad_prob_input(self, x, class_index: int) -> np.ndarray:
        """d softmax(logits)[class_index] / d x."""
        if not 0 <= class_index < self.num_classes:
            raise IndexError(f"class index {class_index} out of range [0, {self.num_classes})")
        p = softmax(self.forward_logits(x))
        cotangent = -p[class_index] * p
        cotangent[class_index] += p[class_index]
        return self.vjp(x, cotangent)

    def grad_xent_input(self, x, target_class: int) -> np.ndarray:
        """Gradient of cross-entropy(softmax(logits), target) w.r.t. the input."""
        if not 0 <= target_class < self.num_classes:
            raise IndexError(f"target class {target_class} out of range [0, {self.num_classes})")
        p = softmax(self.forward_logits(x))
        p[target_class] -= 1.0
        return self.vjp(x, p)

    def save(self, path) -> None:
        save_model(self, path)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def xent_loss(logits: np.ndarray, target: int) -> float:
    z = logits - np.max(logits)
    return float(np.log(np.exp(z).sum()) - z[target])


# ---------------------------------------------------------------------------
# Independent gradient oracle
# ---------------------------------------------------------------------------


def finite_diff_oracle(model: Model, x, class_index: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of grad_input, one forward pair per feature."""
    if h <= 0:
        raise ValueError("h must be positive")
    arr = model._check_input(x)
    flat = arr.ravel()
    out = np.empty_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = model.forward_logits(bumped.reshape(arr.shape))[class_index]
        bumped[i] = flat[i] - h
        f_minus = model.forward_logits(bumped.reshape(arr.shape))[class_index]
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return out.reshape(arr.shape)


def _relu_preacts(model: Model, x: np.ndarray) -> list[np.ndarray]:
    preacts = []
    h = model._check_input(x)
    for layer in model.layers:
        if isinstance(layer, Relu):
            preacts.append(h.copy())
        h, _ = layer.forward(h)
    return preacts


def kink_flags(model: Model, x, h: float) -> np.ndarray:
    """Boolean mask of features whose +/-h bump flips any ReLU pre-activation sign.

    Central differences straddle a gradient jump for exactly these features,
    so the oracle reports a two-sided average there rather than either
    one-sided gradient.
    """
    arr = model._check_input(x)
    flat = arr.ravel()
    flags = np.zeros(flat.size, dtype=bool)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        plus = _relu_preacts(model, bumped.reshape(arr.shape))
        bumped[i] = flat[i] - h
        minus = _relu_preacts(model, bumped.reshape(arr.shape))
        for a, b in zip(plus, minus):
            if np.any((a > 0.0) != (b > 0.0)):
                flags[i] = True
                break
    return flags.reshape(arr.shape)


# ---------------------------------------------------------------------------
# File format (see docs/FILE_FORMATS.md; golden copy under goldens/)
# ---------------------------------------------------------------------------


def _layer_from_record(rec: dict):
    if not isinstance(rec, dict) or "type" not in rec:
        raise ModelFormatError(f"layer record must be an object with a 'type': {rec!r}")
    kind = rec["type"]
    try:
        if kind == "dense":
            return Dense(rec["in"], rec["out"], rec.get("weights"), rec.get("bias"))
        if kind == "relu":
            return Relu()
        if kind == "conv2d":
            return Conv2d(rec["in_ch"], rec["out_ch"], rec["kernel"], rec.get("weights"), rec.get("bias"))
        if kind == "flatten":
            return Flatten()
        if kind == "avgpool2d":
            return AvgPool2d(rec["kernel"])
    except KeyError as exc:
        raise ModelFormatError(f"layer record {kind!r} missing field {exc}") from None
    raise ModelFormatError(f"unknown layer type {kind!r}")


def spec_from_document(doc: dict) -> ModelSpec:
    if doc.get("kind") != "model":
        raise ModelFormatError(f"expected document kind 'model', got {doc.get('kind')!r}")
    try:
        layers = [_layer_from_record(rec) for rec in doc["layers"]]
        return ModelSpec(layers, tuple(doc["input_shape"]), int(doc["num_classes"]))
    except KeyError as exc:
        raise ModelFormatError(f"model document missing field {exc}") from None


def spec_to_document(spec: ModelSpec) -> dict:
    return {
        "kind": "model",
        "input_shape": list(spec.input_shape),
        "num_classes": spec.num_classes,
        "layers": [layer.to_record() for layer in spec.layers],
    }


def load_model(path) -> Model:
    """Load and compile a model document; values widen to float64 on load."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from None
    return Model(spec_from_document(doc))


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(spec_to_document(model.spec)) + "\n")
