"""Linear-path gradient integration.

The integrand is supplied as a scalar function object with ``value(x)`` and
``grad(x)`` (optionally a vectorized ``grad_many``).  ``LogitFunction``
adapts a compiled Model by fixing the scalar output to one class, chosen
once per attribution run; ``PwlModel`` satisfies the protocol directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Model
from .tensor import as_array

SAMPLINGS = ("left", "midpoint", "uniform-random")


class NonFiniteGradientError(RuntimeError):
    """A path sample produced NaN/Inf gradients."""


class LogitFunction:
    """Scalar view of a Model: one class's logit (or softmax probability)."""

    def __init__(self, model: Model, class_index: int, mode: str = "logit"):
        if mode not in ("logit", "prob"):
            raise ValueError(f"mode must be 'logit' or 'prob', got {mode!r}")
        if not 0 <= class_index < model.num_classes:
            raise IndexError(f"class index {class_index} out of range")
        self.model = model
        self.class_index = class_index
        self.mode = mode

    @classmethod
    def for_input(cls, model: Model, x, mode: str = "logit") -> "LogitFunction":
        """Fix the scalar output to the model's predicted class on x."""
        return cls(model, model.predict(as_array(x)), mode)

    def value(self, x) -> float:
        logits = self.model.forward_logits(x)
        if self.mode == "prob":
            from .model import softmax
            return float(softmax(logits)[self.class_index])
        return float(logits[self.class_index])

    def grad(self, x) -> np.ndarray:
        if self.mode == "prob":
            return self.model.grad_prob_input(x, self.class_index)
        return self.model.grad_input(x, self.class_index)


@dataclass(frozen=True)
class RiemannConfig:
    """Step count and sampling rule for the finite-sum approximation."""

    m: int
    sampling: str = "midpoint"
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("step count m must be >= 1")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}")

    def alphas(self) -> np.ndarray:
        if self.sampling == "left":
            return np.arange(self.m) / self.m
        if self.sampling == "midpoint":
            return (np.arange(self.m) + 0.5) / self.m
        rng = np.random.default_rng(self.seed)
        return rng.uniform(0.0, 1.0, size=self.m)


@dataclass
class AttributionMap:
    """Per-feature scores in the input's shape, plus run provenance."""

    scores: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("attribution scores must be finite")


def path_point(x, x_prime, alpha: float) -> np.ndarray:
    """gamma(alpha) = x' + alpha (x - x') on the straight segment."""
    xv, bv = as_array(x), as_array(x_prime)
    if xv.shape != bv.shape:
        raise ValueError(f"shape mismatch: {xv.shape} vs {bv.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return bv + alpha * (xv - bv)


def _path_gradients(fn, points: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    if hasattr(fn, "grad_many"):
        grads = np.asarray(fn.grad_many(points))
        if not np.all(np.isfinite(grads)):
            bad = int(np.argmax(~np.isfinite(grads).all(axis=tuple(range(1, grads.ndim)))))
            raise NonFiniteGradientError(f"non-finite gradient at alpha={alphas[bad]}")
        return grads
    grads = np.empty_like(points)
    for k in range(points.shape[0]):
        g = np.asarray(fn.grad(points[k]))
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient at alpha={alphas[k]}")
        grads[k] = g
    return grads


def riemann_ig(fn, x, x_prime, cfg: RiemannConfig) -> AttributionMap:
    """A_i = (x_i - x'_i) * mean_k grad_i(gamma(alpha_k)).

    Exact for affine functions under every sampling mode; for continuous
    piecewise-linear functions the completeness residual shrinks as m grows.
    """
    xv, bv = as_array(x), as_array(x_prime)
    if xv.shape != bv.shape:
        raise ValueError(f"shape mismatch: {xv.shape} vs {bv.shape}")
    alphas = cfg.alphas()
    flat_x, flat_b = xv.ravel(), bv.ravel()
    points = flat_b[None, :] + alphas[:, None] * (flat_x - flat_b)[None, :]
    grads = _path_gradients(fn, points.reshape(len(alphas), *xv.shape), alphas)
    mean_grad = grads.reshape(len(alphas), -1).mean(axis=0)
    scores = ((flat_x - flat_b) * mean_grad).reshape(xv.shape)
    return AttributionMap(scores, {
        "method": "riemann_ig",
        "m": cfg.m,
        "sampling": cfg.sampling,
        "seed": cfg.seed,
    })


def expected_gradients(fn, x, baselines, K: int, seed: int) -> AttributionMap:
    """Average uniform-random-sampled path integrals over a set of baselines.

    Each baseline b gets floor(K/B) steps from its own RNG stream
    (seed XOR b), so runs are order-independent and reproducible; leftover
    steps are discarded.
    """
    baselines = list(baselines)
    if not baselines:
        raise ValueError("expected_gradients needs at least one baseline")
    if K < len(baselines):
        raise ValueError(f"total steps K={K} must be >= number of baselines {len(baselines)}")
    steps = K // len(baselines)
    stack = []
    for b_idx, baseline in enumerate(baselines):
        cfg = RiemannConfig(steps, "uniform-random", seed ^ b_idx)
        stack.append(riemann_ig(fn, x, baseline, cfg).scores)
    scores = np.mean(np.stack(stack), axis=0)
    return AttributionMap(scores, {
        "method": "expected_gradients",
        "K": K,
        "B": len(baselines),
        "steps_per_baseline": steps,
        "seed": seed,
    })
