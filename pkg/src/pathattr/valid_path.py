"""Validity-filtered multi-baseline gradient integration.

A path sample counts toward feature i only when its scaled path gradient
rho_tilde_i = (x_i - x_tilde_i) * grad_i matches the sign of the input
gradient rho_i and is strictly smaller in magnitude -- the computational
test that the sample sits between feature absence and presence.  Accepted
raw gradients are averaged per feature, scaled by (x - x'), and averaged
over baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import BaselineResult, BaselineSearchError, BaselineSpec, make_baseline
from .model import Model
from .paths import AttributionMap, LogitFunction, NonFiniteGradientError
from .seeding import derive_rng, derive_seed
from .tensor import TensorF, as_tensor


def validity_check(rho_i: float, rho_tilde_i: float) -> bool:
    """True iff signs match and |rho_i| strictly exceeds |rho_tilde_i|."""
    if not (np.isfinite(rho_i) and np.isfinite(rho_tilde_i)):
        raise ValueError("validity_check needs finite gradients")
    return bool(np.sign(rho_i) == np.sign(rho_tilde_i) and abs(rho_i) > abs(rho_tilde_i))


def validity_mask(rho: np.ndarray, rho_tilde: np.ndarray) -> np.ndarray:
    return (np.sign(rho) == np.sign(rho_tilde)) & (np.abs(rho) > np.abs(rho_tilde))


@dataclass
class IntegrationTrace:
    """One baseline's pass: acceptance bookkeeping plus the sampled alphas.

    masks[k] is the per-feature verdict for sample k; grad_acc and count
    hold the accumulated raw gradients and acceptance counts, so
    grad_acc == sum_k grads[k] * masks[k] by construction (replayable from
    alphas alone).
    """

    input_grad: np.ndarray
    grad_acc: np.ndarray
    count: np.ndarray
    alphas: np.ndarray
    masks: np.ndarray

    def per_baseline_scores(self, x: np.ndarray, x_prime: np.ndarray) -> np.ndarray:
        """(x - x') * grad_acc / count, with zero where no sample was accepted."""
        safe = np.where(self.count > 0, self.count, 1)
        avg = np.where(self.count > 0, self.grad_acc / safe, 0.0)
        return (x - x_prime) * avg


def step_alphas(seed: int, steps: int) -> np.ndarray:
    """Uniform(0,1) draws, one independent derived stream per step index."""
    return np.array([derive_rng(seed, k).uniform() for k in range(steps)])


def integrate_single_baseline(fn, x, x_prime, steps: int, seed: int) -> IntegrationTrace:
    """Accumulate validity-accepted raw gradients over `steps` uniform samples.

    The reference gradient rho is the unscaled input gradient, computed once;
    each sample's comparison gradient carries the (x - x_tilde) path scaling.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    xv = np.asarray(x, dtype=np.float64)
    bv = np.asarray(x_prime, dtype=np.float64)
    if xv.shape != bv.shape:
        raise ValueError(f"shape mismatch: {xv.shape} vs {bv.shape}")
    rho = np.asarray(fn.grad(xv))
    if not np.all(np.isfinite(rho)):
        raise NonFiniteGradientError("non-finite input gradient")
    alphas = step_alphas(seed, steps)
    grad_acc = np.zeros_like(xv)
    count = np.zeros(xv.shape, dtype=np.int64)
    masks = np.zeros((steps,) + xv.shape, dtype=bool)
    for k, alpha in enumerate(alphas):
        x_tilde = bv + alpha * (xv - bv)
        g = np.asarray(fn.grad(x_tilde))
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient at alpha={alpha}")
        rho_tilde = (xv - x_tilde) * g
        mask = validity_mask(rho, rho_tilde)
        grad_acc += np.where(mask, g, 0.0)
        count += mask
        masks[k] = mask
    return IntegrationTrace(rho, grad_acc, count, alphas, masks)


@dataclass(frozen=True)
class ProposedConfig:
    """Baseline count, step budget, blur schedule, and search parameters.

    sigmas, when given, must hold one blur width per baseline; the default
    schedule spreads them as 1.5 * (b + 1) pixels to diversify the
    baselines.  baseline_kind swaps the optimized baseline for a fixed one
    (ablations): 'black', 'gaussian_noise', 'input_mean' or 'blur'.
    """

    B: int = 3
    K: int = 150
    sigmas: tuple[float, ...] | None = None
    eta: float | None = None
    eps: float | None = None
    delta: float | None = None
    max_iter: int = 500
    seed: int = 0
    baseline_kind: str = "optimized"
    scalar_mode: str = "logit"

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.K < self.B:
            raise ValueError(f"total steps K={self.K} must be >= B={self.B}")
        if self.sigmas is not None and len(self.sigmas) != self.B:
            raise ValueError(f"sigma schedule needs {self.B} entries, got {len(self.sigmas)}")

    def sigma_schedule(self) -> tuple[float, ...]:
        if self.sigmas is not None:
            return tuple(float(s) for s in self.sigmas)
        return tuple(1.5 * (b + 1) for b in range(self.B))

    def baseline_spec(self, b: int) -> BaselineSpec:
        sigma = self.sigma_schedule()[b]
        return BaselineSpec(
            kind=self.baseline_kind, sigma=sigma, seed=derive_seed(self.seed, 1000 + b),
            eta=self.eta, eps=self.eps, delta=self.delta, max_iter=self.max_iter)


def attribute_proposed(model: Model, x, cfg: ProposedConfig) -> AttributionMap:
    """Full pipeline: per-baseline search, filtered integration, averaging.

    Baselines whose search fails hard are skipped and recorded; the final
    map averages over the baselines actually used and errors only when
    every baseline failed.  Features with zero accepted samples contribute
    zero for that baseline.
    """
    t = as_tensor(x)
    fn = LogitFunction.for_input(model, t.data, mode=cfg.scalar_mode)
    steps = cfg.K // cfg.B
    grad_acc = np.zeros(t.shape)
    used = 0
    diagnostics = []
    skipped = []
    for b in range(cfg.B):
        try:
            result: BaselineResult = make_baseline(model, t, cfg.baseline_spec(b))
        except BaselineSearchError as exc:
            skipped.append({"baseline": b, "error": str(exc)})
            continue
        trace = integrate_single_baseline(fn, t.data, result.x_prime.data,
                                          steps, derive_seed(cfg.seed, b))
        grad_acc += trace.per_baseline_scores(t.data, result.x_prime.data)
        used += 1
        diagnostics.append({
            "baseline": b,
            "achieved_eps": result.achieved_eps,
            "achieved_delta": result.achieved_delta,
            "iterations": result.iterations,
            "converged": result.converged,
            "clipped_conflicts": result.clipped_conflicts,
            "accepted_fraction": float(trace.count.mean() / steps),
        })
    if used == 0:
        raise BaselineSearchError(f"all {cfg.B} baseline searches failed: {skipped}")
    scores = grad_acc / used
    return AttributionMap(scores, {
        "method": "proposed",
        "B": cfg.B,
        "baselines_used": used,
        "K": cfg.K,
        "steps_per_baseline": steps,
        "sigmas": list(cfg.sigma_schedule()),
        "baseline_kind": cfg.baseline_kind,
        "scalar_mode": cfg.scalar_mode,
        "eta": cfg.eta,
        "eps": cfg.eps,
        "delta": cfg.delta,
        "max_iter": cfg.max_iter,
        "seed": cfg.seed,
        "class_index": fn.class_index,
        "baseline_diagnostics": diagnostics,
        "skipped_baselines": skipped,
    })
