"""Baseline constructions for path attribution.

Fixed recipes (black, seeded Gaussian noise, input mean, Gaussian blur)
plus the optimized feature-absence baseline: starting from a blur of the
input, take sign-gradient steps on the cross-entropy loss toward the
input's predicted class until the logit vectors are within eps, while a
per-feature minimum gap delta is enforced after every step and the result
stays clipped to the dynamic range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Model, softmax
from .tensor import TensorF, as_tensor

FIXED_KINDS = ("black", "gaussian_noise", "input_mean")


class BaselineSearchError(RuntimeError):
    """The search ended far outside tolerance (beyond 10x eps) or went non-finite."""


@dataclass(frozen=True)
class BaselineSpec:
    """Recipe for a baseline.

    kind: one of black | gaussian_noise | input_mean | blur | optimized.
    sigma is the blur kernel width (blur/optimized), eta the descent step
    size, eps the logit-distance threshold, delta the per-feature minimum
    gap, all in input units.  None for eta/eps/delta means "derive the
    default from the input at run time" (eta = range/255,
    eps = 0.05 * ||logits(x)||, delta = 0.05 * range).
    """

    kind: str
    sigma: float = 2.0
    std: float = 0.1
    seed: int = 0
    eta: float | None = None
    eps: float | None = None
    delta: float | None = None
    max_iter: int = 500

    def __post_init__(self):
        if self.kind not in FIXED_KINDS + ("blur", "optimized"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.kind in ("blur", "optimized") and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def digest_fields(self) -> dict:
        return {k: getattr(self, k) for k in
                ("kind", "sigma", "std", "seed", "eta", "eps", "delta", "max_iter")}


@dataclass
class BaselineResult:
    """Found baseline plus achieved (eps, delta) diagnostics."""

    x_prime: TensorF
    achieved_eps: float
    achieved_delta: float
    iterations: int
    converged: bool
    clipped_conflicts: int = 0
    eps_target: float = float("nan")
    delta_target: float = float("nan")


# ---------------------------------------------------------------------------
# Blur and fixed baselines
# ---------------------------------------------------------------------------


def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _reflect_indices(n: int, radius: int) -> np.ndarray:
    """Symmetric-reflection index map for positions -radius .. n-1+radius."""
    idx = np.arange(-radius, n + radius)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx < n, idx, period - 1 - idx)


def _blur_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    moved = np.moveaxis(arr, axis, -1)
    n = moved.shape[-1]
    padded = moved[..., _reflect_indices(n, radius)]
    out = np.zeros_like(moved)
    for j, kj in enumerate(kernel):
        out += kj * padded[..., j:j + n]
    return np.moveaxis(out, -1, axis)


def gaussian_blur(x, sigma: float):
    """Separable normalized Gaussian (radius ceil(3*sigma), reflective border).

    2-D arrays blur along both axes, (C, H, W) stacks blur each channel's
    spatial axes, 1-D signals blur along their only axis.  Constant inputs
    are fixed points because the kernel sums to one.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    t = as_tensor(x)
    kernel = _gauss_kernel(sigma)
    arr = t.data
    if arr.ndim == 1:
        out = _blur_axis(arr, kernel, 0)
    elif arr.ndim == 2:
        out = _blur_axis(_blur_axis(arr, kernel, 0), kernel, 1)
    elif arr.ndim == 3:
        out = _blur_axis(_blur_axis(arr, kernel, 1), kernel, 2)
    else:
        raise ValueError(f"cannot blur a rank-{arr.ndim} tensor")
    result = t.with_data(out)
    return result if isinstance(x, TensorF) else result.data


def fixed_baseline(x, spec: BaselineSpec) -> TensorF:
    """black -> zeros; input_mean -> constant mean(x); gaussian_noise -> seeded noise."""
    t = as_tensor(x)
    if spec.kind == "black":
        return t.with_data(np.zeros(t.shape))
    if spec.kind == "input_mean":
        return t.with_data(np.full(t.shape, t.data.mean()))
    if spec.kind == "gaussian_noise":
        rng = np.random.default_rng(spec.seed)
        mid = 0.5 * (t.lo + t.hi)
        noise = rng.normal(mid, spec.std, size=t.shape)
        return t.with_data(np.clip(noise, t.lo, t.hi))
    raise ValueError(f"fixed_baseline cannot build kind {spec.kind!r}")


def make_baseline(model: Model, x: TensorF, spec: BaselineSpec) -> BaselineResult:
    """Dispatch any BaselineSpec; fixed kinds report their diagnostics too."""
    if spec.kind == "optimized":
        return compute_baseline(model, x, spec)
    if spec.kind == "blur":
        bl = gaussian_blur(x, spec.sigma)
    else:
        bl = fixed_baseline(x, spec)
    lx = model.forward_logits(x.data)
    eps = float(np.linalg.norm(lx - model.forward_logits(bl.data)))
    delta = float(np.min(np.abs(x.data - bl.data)))
    return BaselineResult(bl, eps, delta, 0, True)


# ---------------------------------------------------------------------------
# Optimized baseline (sign-gradient search)
# ---------------------------------------------------------------------------


def enforce_min_gap(x, x_p, delta: float) -> np.ndarray:
    """Push every feature of x_p at least delta away from x.

    Applies x_p_i <- -sgn(x_i - x_p_i) * delta + x_p_i wherever the gap is
    below delta, with sgn(0) := +1 so coincident features still separate.
    """
    xv = np.asarray(x, dtype=np.float64)
    pv = np.asarray(x_p, dtype=np.float64)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    diff = xv - pv
    sgn = np.where(diff >= 0.0, 1.0, -1.0)
    return np.where(np.abs(diff) < delta, pv - sgn * delta, pv)


def compute_baseline(model: Model, x, spec: BaselineSpec,
                     raw_gradient: bool = False) -> BaselineResult:
    """Search for a baseline with near-equal logits and per-feature gap delta.

    Loop: sign step of size eta on the cross-entropy gradient toward x's
    predicted class (raw_gradient=True steps on the raw predicted-logit
    gradient instead), then gap enforcement, then clip to [lo, hi]; exits
    when the logit distance drops to eps or max_iter is hit.  One final
    gap+clip pass guarantees the gap postcondition even on a zero-iteration
    exit.  Overrunning max_iter is tolerated up to 10x eps (converged=False);
    beyond that it raises.
    """
    if spec.kind != "optimized":
        raise ValueError(f"compute_baseline needs kind='optimized', got {spec.kind!r}")
    t = as_tensor(x)
    lo, hi = t.lo, t.hi
    eta = spec.eta if spec.eta is not None else (hi - lo) / 255.0
    delta = spec.delta if spec.delta is not None else 0.05 * (hi - lo)

    logits_x = model.forward_logits(t.data)
    target = int(np.argmax(logits_x))
    eps = spec.eps if spec.eps is not None else 0.05 * float(np.linalg.norm(logits_x))
    if eps <= 0.0:
        eps = 1e-6  # degenerate all-zero logits; keep the guard meaningful

    x_p = np.asarray(gaussian_blur(t, spec.sigma).data)
    best_gap, best_x_p = np.inf, x_p
    iterations = 0
    while iterations < spec.max_iter:
        logits_p, caches = model._forward_cached(x_p)
        gap = float(np.linalg.norm(logits_x - logits_p))
        if gap < best_gap:
            best_gap, best_x_p = gap, x_p
        if gap <= eps:
            break
        if raw_gradient:
            cot = np.zeros(model.num_classes)
            cot[target] = 1.0
        else:
            cot = softmax(logits_p)
            cot[target] -= 1.0
        g = cot
        for layer, cache in zip(reversed(model.layers), reversed(caches)):
            g = layer.backward(g, cache)
        if not np.all(np.isfinite(g)):
            raise BaselineSearchError("non-finite gradient during baseline search")
        step = np.sign(g)
        if not np.any(step):
            break  # flat-gradient plateau; no descent direction exists
        x_p = x_p - eta * step
        x_p = enforce_min_gap(t.data, x_p, delta)
        x_p = np.clip(x_p, lo, hi)
        iterations += 1
    else:
        # max_iter exhausted: the sign walk can overshoot the logit target
        # and keep climbing, so fall back to the closest iterate seen
        x_p = best_x_p

    x_p = np.clip(enforce_min_gap(t.data, x_p, delta), lo, hi)
    gaps = np.abs(t.data - x_p)
    achieved_eps = float(np.linalg.norm(logits_x - model.forward_logits(x_p)))
    if not np.isfinite(achieved_eps):
        raise BaselineSearchError("baseline search produced non-finite logits")
    converged = achieved_eps <= eps
    if not converged and achieved_eps > 10.0 * eps:
        raise BaselineSearchError(
            f"baseline search stalled: achieved eps {achieved_eps:.4g} > 10 x {eps:.4g} "
            f"after {iterations} iterations")
    return BaselineResult(
        x_prime=t.with_data(x_p),
        achieved_eps=achieved_eps,
        achieved_delta=float(gaps.min()),
        iterations=iterations,
        converged=converged,
        clipped_conflicts=int(np.sum(gaps < delta)),
        eps_target=eps,
        delta_target=delta,
    )
