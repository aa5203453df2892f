"""Evaluation protocols: insertion/deletion curves and Sensitivity-N.

Curve scores default to the softmax probability of the class the model
predicted on the untouched input (score="logit" switches to the raw
logit); the insertion canvas / deletion replacement is a caller-supplied
reference image.  Sensitivity-N masks random feature subsets to literal
zero and correlates summed attributions with the output drop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Model, softmax
from .paths import AttributionMap
from .tensor import as_array


class ZeroVarianceError(ValueError):
    """Pearson correlation is undefined for a constant sequence."""


def pearson(a, b) -> float:
    """Sample correlation coefficient; raises on zero variance."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1 or av.size < 2:
        raise ValueError("pearson needs two equal-length sequences of length >= 2")
    da = av - av.mean()
    db = bv - bv.mean()
    na = float(np.sqrt(np.sum(da * da)))
    nb = float(np.sqrt(np.sum(db * db)))
    if na == 0.0 or nb == 0.0:
        raise ZeroVarianceError("zero variance in input sequence")
    return float(np.sum(da * db) / (na * nb))


@dataclass(frozen=True)
class RankedOrder:
    """Feature indices, most important first; ties broken by ascending index."""

    order: tuple[int, ...]
    tie_rule: str = "ascending-index"

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError("order must be a permutation of 0..n-1")


def rank_features(amap: AttributionMap) -> RankedOrder:
    flat = amap.scores.ravel()
    order = np.argsort(-flat, kind="stable")
    return RankedOrder(tuple(int(i) for i in order))


@dataclass(frozen=True)
class Curve:
    """(fraction, score) pairs, fractions strictly increasing from 0 to 1."""

    fractions: tuple[float, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        f = np.asarray(self.fractions)
        s = np.asarray(self.scores)
        if f.shape != s.shape or f.size < 2:
            raise ValueError("curve needs matching fraction/score sequences of length >= 2")
        if f[0] != 0.0 or f[-1] != 1.0:
            raise ValueError("curve must start at fraction 0 and end at 1")
        if np.any(np.diff(f) <= 0):
            raise ValueError("fractions must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise ValueError("curve values must be finite")


def auc_trapezoid(curve: Curve) -> float:
    f = np.asarray(curve.fractions)
    s = np.asarray(curve.scores)
    return float(np.sum(0.5 * (s[1:] + s[:-1]) * np.diff(f)))


@dataclass
class InsDelResult:
    insertion: Curve
    deletion: Curve
    insertion_auc: float
    deletion_auc: float
    difference: float
    class_index: int
    score: str
    group_size: int


def _class_score(model: Model, x: np.ndarray, class_index: int, score: str) -> float:
    logits = model.forward_logits(x)
    if score == "prob":
        return float(softmax(logits)[class_index])
    if score == "logit":
        return float(logits[class_index])
    raise ValueError(f"score must be 'prob' or 'logit', got {score!r}")


def insertion_deletion_score(model: Model, x, amap: AttributionMap, reference,
                             group_size: int = 1, score: str = "prob") -> InsDelResult:
    """Replace/restore features in attribution order and record model scores.

    Deletion walks from the input toward the reference; insertion walks
    from the reference toward the input.  The final deletion point is the
    pure reference canvas and the final insertion point is the input, so
    the endpoints are exact forward evaluations.
    """
    xv = as_array(x)
    ref = as_array(reference)
    if ref.shape != xv.shape:
        raise ValueError(f"reference shape {ref.shape} does not match input {xv.shape}")
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    n = xv.size
    order = np.asarray(rank_features(amap).order)
    class_index = model.predict(xv)

    def walk(start: np.ndarray, source: np.ndarray) -> Curve:
        canvas = start.ravel().copy()
        fractions = [0.0]
        scores = [_class_score(model, canvas.reshape(xv.shape), class_index, score)]
        done = 0
        while done < n:
            group = order[done:done + group_size]
            canvas[group] = source.ravel()[group]
            done += len(group)
            fractions.append(done / n)
            scores.append(_class_score(model, canvas.reshape(xv.shape), class_index, score))
        return Curve(tuple(fractions), tuple(scores))

    deletion = walk(xv, ref)
    insertion = walk(ref, xv)
    ins_auc = auc_trapezoid(insertion)
    del_auc = auc_trapezoid(deletion)
    return InsDelResult(insertion, deletion, ins_auc, del_auc,
                        ins_auc - del_auc, class_index, score, group_size)


@dataclass
class CorrelationResult:
    fraction: float
    subset_size: int
    correlation: float | None
    verdict: str  # "ok" or "undefined (zero variance)"


def sensitivity_n(model: Model, x, amap: AttributionMap, fractions,
                  samples_per_fraction: int = 16, seed: int = 0,
                  score: str = "logit") -> list[CorrelationResult]:
    """Correlate summed subset attributions with the drop from zero-masking.

    For each fraction, samples random feature subsets of that size, masks
    them to zero, and computes Pearson correlation between
    sum_{i in S} A_i and F(x) - F(masked).  Zero-variance fractions are
    reported as undefined rather than NaN.
    """
    xv = as_array(x)
    n = xv.size
    if samples_per_fraction < 2:
        raise ValueError("samples_per_fraction must be >= 2")
    fracs = [float(f) for f in fractions]
    if any(not 0.01 <= f <= 0.9 for f in fracs):
        raise ValueError("fractions must lie within [0.01, 0.9]")
    class_index = model.predict(xv)
    base_score = _class_score(model, xv, class_index, score)
    flat_scores = amap.scores.ravel()
    rng = np.random.default_rng(seed)
    results = []
    for frac in fracs:
        k = max(1, int(round(frac * n)))
        attr_sums = []
        drops = []
        for _ in range(samples_per_fraction):
            subset = rng.choice(n, size=k, replace=False)
            masked = xv.ravel().copy()
            masked[subset] = 0.0
            attr_sums.append(float(flat_scores[subset].sum()))
            drops.append(base_score - _class_score(model, masked.reshape(xv.shape),
                                                   class_index, score))
        try:
            corr = pearson(attr_sums, drops)
            results.append(CorrelationResult(frac, k, corr, "ok"))
        except ZeroVarianceError:
            results.append(CorrelationResult(frac, k, None, "undefined (zero variance)"))
    return results


@dataclass
class EvalReport:
    """Per-image insertion/deletion rows plus the aggregate mean difference."""

    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def add(self, name: str, result: InsDelResult) -> None:
        self.rows.append({
            "image": name,
            "insertion_auc": result.insertion_auc,
            "deletion_auc": result.deletion_auc,
            "difference": result.difference,
        })

    def mean_difference(self) -> float:
        if not self.rows:
            raise ValueError("report has no rows")
        return float(np.mean([r["difference"] for r in self.rows]))
