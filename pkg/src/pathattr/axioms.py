"""Executable axiom checks and the headline demonstration pair.

Each check returns an AxiomReport that is reproducible bit-for-bit from
its recorded digest and seed.  The demonstration pair contrasts the
zero-baseline behaviour of the built-in two-piece model (feature ranking
flips against the active weights, completeness breaks across the
discontinuity) with the same-region baseline (scores track the active
weights exactly).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hashing import sha256_digest
from .model import Dense, Model
from .paths import RiemannConfig, riemann_ig
from .pwl import (
    EXAMPLE1_QUOTED_ZERO_BASELINE,
    PwlModel,
    PwlPiece,
    builtin_pwl,
    exact_path_attribution,
)


@dataclass
class AxiomReport:
    name: str
    digest: str
    residuals: dict = field(default_factory=dict)
    tolerance: float | None = None
    passed: bool | None = None
    seed: int | None = None
    notes: list[str] = field(default_factory=list)

    def summary(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        parts = [f"[{status}] {self.name}"]
        for key, val in self.residuals.items():
            parts.append(f"{key}={val:.3g}" if isinstance(val, float) else f"{key}={val}")
        if self.tolerance is not None:
            parts.append(f"tol={self.tolerance:.3g}")
        return "  ".join(parts)


# ---------------------------------------------------------------------------
# Completeness and dummy
# ---------------------------------------------------------------------------


def check_completeness(fn, x, x_prime, amap, tol: float | None = None) -> AxiomReport:
    """Residual |sum_i A_i - (F(x) - F(x'))|, absolute and relative."""
    xv = np.asarray(x, dtype=np.float64)
    bv = np.asarray(x_prime, dtype=np.float64)
    delta_f = fn.value(xv) - fn.value(bv)
    total = float(np.sum(amap.scores))
    residual = abs(total - delta_f)
    relative = residual / max(abs(delta_f), 1e-30)
    return AxiomReport(
        name="completeness",
        digest=sha256_digest({"x": xv, "x_prime": bv, "scores": amap.scores, "meta": amap.meta}),
        residuals={"sum_scores": total, "delta_f": float(delta_f),
                   "residual": residual, "relative": relative},
        tolerance=tol,
        passed=None if tol is None else residual <= tol,
    )


def feature_structurally_unused(model: Model, index: int) -> bool:
    """True when the first parameter layer is dense with a zero column there.

    A zero first-layer column means the feature never enters the network,
    which is the only structural notion of "unused" checkable without
    region enumeration.
    """
    for layer in model.layers:
        if isinstance(layer, Dense):
            if not 0 <= index < layer.in_dim:
                raise IndexError(f"feature index {index} out of range")
            return bool(np.all(layer.W[:, index] == 0.0))
        if hasattr(layer, "W"):
            raise ValueError("structural unuse is only checkable for dense-first models")
    raise ValueError("model has no parameter layers")


def check_dummy(model: Model, amap, unused_feature_index: int) -> AxiomReport:
    """Pass iff a provably unused feature scored exactly zero."""
    if not feature_structurally_unused(model, unused_feature_index):
        raise ValueError(
            f"feature {unused_feature_index} is not provably unused (nonzero first-layer column)")
    score = float(amap.scores.ravel()[unused_feature_index])
    return AxiomReport(
        name="dummy",
        digest=sha256_digest({"scores": amap.scores, "index": unused_feature_index}),
        residuals={"score": score},
        tolerance=0.0,
        passed=score == 0.0,
    )


# ---------------------------------------------------------------------------
# Weak dependence and same-region consistency (piecewise-linear models)
# ---------------------------------------------------------------------------


def _perturbed_copy(base: PwlModel, keep: int, rng: np.random.Generator) -> PwlModel:
    """Random weight/bias noise on every piece except `keep` (regions fixed)."""
    pieces = []
    for i, p in enumerate(base.pieces):
        if i == keep:
            pieces.append(p)
        else:
            w = np.asarray(p.w) + rng.normal(0.0, 5.0, size=len(p.w))
            b = p.b + rng.normal(0.0, 5.0)
            pieces.append(PwlPiece(p.halfspaces, tuple(w), float(b)))
    return PwlModel(pieces, base.default_value, check_disjoint=False)


def probe_weak_dependence(base: PwlModel, x, x_prime,
                          trials: int = 100, seed: int = 0) -> AxiomReport:
    """Perturb inactive pieces and measure attribution movement.

    With x and x' in one region the map must not move at all (<= 1e-12);
    with a cross-region baseline the perturbations must move it in every
    trial, witnessing the dependence on weights the path never uses at x.
    """
    xv = np.asarray(x, dtype=np.float64)
    bv = np.asarray(x_prime, dtype=np.float64)
    region_x = base.active_piece(xv)
    region_b = base.active_piece(bv)
    if region_x is None:
        raise ValueError("x lies outside every region; nothing is active")
    same_region = region_x == region_b
    reference = exact_path_attribution(base, xv, bv)
    rng = np.random.default_rng(seed)
    max_dev = 0.0
    changed = 0
    for _ in range(trials):
        perturbed = _perturbed_copy(base, region_x, rng)
        attr = exact_path_attribution(perturbed, xv, bv)
        dev = float(np.max(np.abs(attr - reference)))
        max_dev = max(max_dev, dev)
        changed += dev > 1e-12
    digest = sha256_digest({"x": xv, "x_prime": bv, "trials": trials, "seed": seed})
    if same_region:
        return AxiomReport(
            name="weak_dependence_same_region",
            digest=digest, seed=seed,
            residuals={"max_deviation": max_dev, "trials": trials},
            tolerance=1e-12,
            passed=max_dev <= 1e-12,
            notes=["inactive-piece weights perturbed; same-region map must be invariant"],
        )
    return AxiomReport(
        name="weak_dependence_cross_region_witness",
        digest=digest, seed=seed,
        residuals={"changed_trials": changed, "trials": trials, "max_deviation": max_dev},
        passed=changed == trials,
        notes=["cross-region baseline: map depends on weights of pieces x never activates"],
    )


def _sample_in_region(base: PwlModel, region: int, rng: np.random.Generator,
                      box: tuple[float, float]) -> np.ndarray:
    piece = base.pieces[region]
    for _ in range(10_000):
        pt = rng.uniform(box[0], box[1], size=base.dim)
        if piece.contains(pt):
            return pt
    raise RuntimeError(f"could not sample a point in region {region} from box {box}")


def check_same_region_consistency(base: PwlModel, region: int = 1,
                                  trials: int = 100, seed: int = 0,
                                  box: tuple[float, float] | None = None) -> AxiomReport:
    """Score ratios recover the active-piece weight ratio for matched pairs.

    Pairs are sampled with equal per-feature displacement magnitude
    (x' = x - t * signs), the regime in which |A_1 / A_2| reduces to
    |w_1 / w_2|; single-region completeness holds exactly regardless.
    """
    if base.dim < 2:
        raise ValueError("ratio consistency needs at least two features")
    if box is None:
        box = base._sample_box()
    piece = base.pieces[region]
    w = np.asarray(piece.w)
    if w[1] == 0.0:
        raise ValueError("second active weight is zero; ratio undefined")
    target = abs(w[0] / w[1])
    rng = np.random.default_rng(seed)
    worst = 0.0
    degenerate = 0
    for _ in range(trials):
        x = _sample_in_region(base, region, rng, box)
        x_prime = None
        for _ in range(1000):
            t = rng.uniform(0.05, 0.25 * (box[1] - box[0]))
            signs = rng.choice([-1.0, 1.0], size=base.dim)
            candidate = x - t * signs
            if piece.contains(candidate):
                x_prime = candidate
                break
        if x_prime is None:
            degenerate += 1
            continue
        attr = exact_path_attribution(base, x, x_prime)
        if attr[1] == 0.0:
            degenerate += 1
            continue
        worst = max(worst, abs(abs(attr[0] / attr[1]) - target))
    return AxiomReport(
        name="same_region_ratio_consistency",
        digest=sha256_digest({"region": region, "trials": trials, "seed": seed, "box": list(box)}),
        seed=seed,
        residuals={"max_ratio_error": worst, "target_ratio": float(target),
                   "degenerate_pairs": degenerate},
        tolerance=1e-9,
        passed=worst <= 1e-9 and degenerate < trials,
        notes=["pairs use equal per-feature displacement magnitudes"],
    )


# ---------------------------------------------------------------------------
# Demonstration pair for the built-in model
# ---------------------------------------------------------------------------

X_A = np.array([1.5, 1.5])
X_B = np.array([4.0, 4.0])
SAME_REGION_BASELINE = np.array([3.0, 3.0])
ZERO_BASELINE = np.array([0.0, 0.0])

CONSISTENT_EXPECTED = {"x_a": np.array([-6.0, -1.5]), "x_b": np.array([4.0, 1.0])}
ZERO_BASELINE_EXPECTED = {"x_a": np.array([3.0, 4.5]), "x_b": np.array([13.0, 7.0])}


def demo_consistent_baseline(riemann_m: int = 1) -> dict:
    """Same-region baseline on the built-in model: exact, complete, ratio 4."""
    m = builtin_pwl("example1")
    out = {"baseline": SAME_REGION_BASELINE.tolist(), "cases": [], "all_pass": True}
    for label, x, expected in (("x_a", X_A, CONSISTENT_EXPECTED["x_a"]),
                               ("x_b", X_B, CONSISTENT_EXPECTED["x_b"])):
        oracle = exact_path_attribution(m, x, SAME_REGION_BASELINE)
        numeric = riemann_ig(m, x, SAME_REGION_BASELINE, RiemannConfig(riemann_m, "midpoint")).scores
        oracle_ok = bool(np.max(np.abs(oracle - expected)) <= 1e-9)
        numeric_ok = bool(np.max(np.abs(numeric - expected)) <= 1e-9)
        completeness = abs(float(oracle.sum()) - (m.value(x) - m.value(SAME_REGION_BASELINE)))
        out["cases"].append({
            "input": x.tolist(),
            "expected": expected.tolist(),
            "oracle": oracle.tolist(),
            "riemann_m1": numeric.tolist(),
            "oracle_ok": oracle_ok,
            "riemann_ok": numeric_ok,
            "completeness_residual": completeness,
            "abs_ratio": abs(oracle[0] / oracle[1]),
        })
        out["all_pass"] &= oracle_ok and numeric_ok and completeness <= 1e-12
    return out


def demo_zero_baseline(riemann_m: int = 10_000) -> dict:
    """Zero baseline on the built-in model: ranking flips, completeness breaks."""
    m = builtin_pwl("example1")
    out = {"baseline": ZERO_BASELINE.tolist(), "cases": [], "all_pass": True,
           "quoted_values_note": (
               "closed-form evaluation of the function as defined yields these scores; "
               f"the quoted scores {EXAMPLE1_QUOTED_ZERO_BASELINE} for the same construction "
               "are not reproduced by direct integration and are reported, not adopted")}
    for label, x, expected in (("x_a", X_A, ZERO_BASELINE_EXPECTED["x_a"]),
                               ("x_b", X_B, ZERO_BASELINE_EXPECTED["x_b"])):
        oracle = exact_path_attribution(m, x, ZERO_BASELINE)
        numeric = riemann_ig(m, x, ZERO_BASELINE, RiemannConfig(riemann_m, "midpoint")).scores
        rel = float(np.max(np.abs(numeric - oracle) / np.maximum(np.abs(oracle), 1e-30)))
        active_w = np.asarray(m.pieces[m.active_piece(x)].w)
        counter_intuitive = bool(oracle[1] > oracle[0] and active_w[0] > active_w[1])
        completeness = abs(float(oracle.sum()) - (m.value(x) - m.value(ZERO_BASELINE)))
        out["cases"].append({
            "input": x.tolist(),
            "oracle": oracle.tolist(),
            "expected_oracle": expected.tolist(),
            "riemann": numeric.tolist(),
            "riemann_rel_err": rel,
            "active_weights": active_w.tolist(),
            "counter_intuitive_ranking": counter_intuitive,
            "completeness_residual": completeness,
        })
        out["all_pass"] &= bool(np.max(np.abs(oracle - expected)) <= 1e-9) and rel <= 1e-3
    # only x_a flips the ranking against the active weights; x_b stays monotone
    out["counter_intuitiveness_witnessed"] = out["cases"][0]["counter_intuitive_ranking"]
    return out
