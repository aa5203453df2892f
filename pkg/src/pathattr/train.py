"""Toy trainer and synthetic desk-scale datasets.

The trainer exists so downstream code can assume a well-trained model
without shipping real datasets: plain per-sample SGD on softmax
cross-entropy, fully deterministic given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, ModelSpec, _PARAM_LAYERS, softmax, xent_loss


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainResult:
    model: Model
    final_loss: float
    accuracy: float
    epochs: int


def train_toy(spec: ModelSpec, dataset, epochs: int, lr: float, seed: int,
              report_every: int = 0) -> TrainResult:
    """SGD-train a spec on (X, y); missing weights are seeded-initialized.

    epochs=0 returns the freshly initialized model unchanged.
    """
    X, y = dataset
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("dataset inputs and labels differ in length")
    if np.any(y < 0) or np.any(y >= spec.num_classes):
        raise ValueError(f"labels must lie in [0, {spec.num_classes})")

    rng = np.random.default_rng(seed)
    for layer in spec.layers:
        if isinstance(layer, _PARAM_LAYERS) and (layer.W is None or layer.b is None):
            layer.init(rng)
    model = Model(spec)

    n = X.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for idx in order:
            xi = X[idx].reshape(spec.input_shape)
            logits, caches = model._forward_cached(xi)
            loss = xent_loss(logits, int(y[idx]))
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, sample {int(idx)} (lr={lr}); reduce lr")
            epoch_loss += loss
            g = softmax(logits)
            g[y[idx]] -= 1.0
            for layer, cache in zip(reversed(model.layers), reversed(caches)):
                if isinstance(layer, _PARAM_LAYERS):
                    dW, db = layer.param_grads(g, cache)
                    g = layer.backward(g, cache)
                    layer.apply_update(dW, db, lr)
                else:
                    g = layer.backward(g, cache)
        if report_every and (epoch + 1) % report_every == 0:
            print(f"epoch {epoch + 1}/{epochs}  mean loss {epoch_loss / n:.4f}")

    losses = []
    correct = 0
    for i in range(n):
        logits = model.forward_logits(X[i].reshape(spec.input_shape))
        losses.append(xent_loss(logits, int(y[i])))
        correct += int(np.argmax(logits)) == int(y[i])
    return TrainResult(model, float(np.mean(losses)), correct / n, epochs)


# ---------------------------------------------------------------------------
# Synthetic datasets
# ---------------------------------------------------------------------------


def blob_dataset(n: int, seed: int, spread: float = 0.06):
    """Two separable Gaussian blobs in [0,1]^2, labels 0/1.

    Centers sit on a diagonal with a fixed feature offset inside each class,
    so descent paths started from a blurred input approach an input's logit
    level set obliquely instead of marching straight through the input.
    """
    rng = np.random.default_rng(seed)
    centers = np.array([[0.25, 0.55], [0.62, 0.92]])
    y = rng.integers(0, 2, size=n)
    X = centers[y] + rng.normal(0.0, spread, size=(n, 2))
    return np.clip(X, 0.02, 0.98), y


def shapes16_dataset(n: int, seed: int):
    """16x16 two-class images: filled squares (0) vs plus-shaped crosses (1)."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, 1, 16, 16))
    y = rng.integers(0, 2, size=n)
    for i in range(n):
        bg = rng.uniform(0.05, 0.2)
        img = np.full((16, 16), bg) + rng.normal(0.0, 0.03, size=(16, 16))
        fg = rng.uniform(0.7, 0.95)
        if y[i] == 0:
            side = int(rng.integers(5, 9))
            r = int(rng.integers(1, 16 - side))
            c = int(rng.integers(1, 16 - side))
            img[r:r + side, c:c + side] = fg
        else:
            arm = int(rng.integers(4, 7))
            r = int(rng.integers(arm, 16 - arm - 1))
            c = int(rng.integers(arm, 16 - arm - 1))
            img[r - arm:r + arm + 1, c:c + 2] = fg
            img[r:r + 2, c - arm:c + arm + 1] = fg
        X[i, 0] = np.clip(img, 0.0, 1.0)
    return X, y


def blob_net_spec(hidden: int = 8) -> ModelSpec:
    """2-hidden-2 ReLU net with a zero-initialized classification head.

    Softmax cross-entropy updates of a zero head stay exactly antisymmetric
    across the two rows, so the logit pair satisfies l1 = -l0 for every
    input; matching one logit then matches the whole vector, which keeps
    the baseline search's logit-distance target one-dimensional.
    """
    from .model import Dense, Relu
    head = Dense(hidden, 2, np.zeros(2 * hidden), np.zeros(2))
    return ModelSpec([Dense(2, hidden), Relu(), head], (2,), 2)


def cnn16_spec() -> ModelSpec:
    from .model import AvgPool2d, Conv2d, Dense, Flatten, Relu
    return ModelSpec(
        [Conv2d(1, 4, 3), Relu(), AvgPool2d(2),
         Conv2d(4, 8, 3), Relu(), AvgPool2d(2),
         Flatten(), Dense(8 * 4 * 4, 2)],
        (1, 16, 16), 2)
