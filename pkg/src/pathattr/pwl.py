"""Exact path attribution over explicit piecewise-linear functions.

A PwlModel is a list of affine pieces, each gated by a conjunction of
half-spaces; points outside every region take a constant default value
with zero gradient.  Because the gradient is piecewise constant along any
straight segment, the linear-path attribution integral has a closed form:
split [0,1] at the boundary crossings and weight each interval's active
piece by its length.  This module is the ground truth the numerical
integrator is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEDUP_TOL = 1e-12


class RegionOverlapError(RuntimeError):
    """A point was found inside two regions (regions must be disjoint)."""


@dataclass(frozen=True)
class Halfspace:
    """normal . x <= offset (strict=True makes the inequality strict)."""

    normal: tuple[float, ...]
    offset: float
    strict: bool = False

    def contains(self, x: np.ndarray) -> bool:
        v = float(np.dot(self.normal, x))
        return v < self.offset if self.strict else v <= self.offset


@dataclass(frozen=True)
class PwlPiece:
    halfspaces: tuple[Halfspace, ...]
    w: tuple[float, ...]
    b: float

    def contains(self, x: np.ndarray) -> bool:
        return all(h.contains(x) for h in self.halfspaces)


class PwlModel:
    """Disjoint affine pieces over half-space regions, plus a default value.

    Disjointness is checked probabilistically at construction: 10^4 points
    are sampled from a box covering the halfspace offsets and construction
    fails if any lands in two regions.  That is a heuristic, not a
    polyhedral proof; callers building adversarial near-overlapping regions
    can defeat it.
    """

    def __init__(self, pieces, default_value: float = 0.0,
                 check_disjoint: bool = True, check_samples: int = 10_000,
                 check_seed: int = 0):
        self.pieces: list[PwlPiece] = [self._coerce_piece(p) for p in pieces]
        if not self.pieces:
            raise ValueError("PwlModel needs at least one piece")
        self.dim = len(self.pieces[0].w)
        for p in self.pieces:
            if len(p.w) != self.dim:
                raise ValueError("all pieces must share one dimensionality")
        self.default_value = float(default_value)
        if check_disjoint:
            self._check_disjoint(check_samples, check_seed)

    @staticmethod
    def _coerce_piece(p) -> PwlPiece:
        if isinstance(p, PwlPiece):
            return p
        halfspaces, w, b = p
        hs = tuple(h if isinstance(h, Halfspace) else Halfspace(tuple(h[0]), float(h[1]), bool(h[2]))
                   for h in halfspaces)
        return PwlPiece(hs, tuple(float(v) for v in w), float(b))

    def _sample_box(self) -> tuple[float, float]:
        span = 1.0
        for p in self.pieces:
            for h in p.halfspaces:
                span = max(span, abs(h.offset))
        return -2.0 * span - 1.0, 2.0 * span + 1.0

    def _check_disjoint(self, samples: int, seed: int) -> None:
        lo, hi = self._sample_box()
        rng = np.random.default_rng(seed)
        pts = rng.uniform(lo, hi, size=(samples, self.dim))
        counts = np.zeros(samples, dtype=np.int64)
        for p in self.pieces:
            inside = np.ones(samples, dtype=bool)
            for h in p.halfspaces:
                v = pts @ np.asarray(h.normal)
                inside &= (v < h.offset) if h.strict else (v <= h.offset)
            counts += inside
        if np.any(counts > 1):
            bad = pts[np.argmax(counts > 1)]
            raise RegionOverlapError(f"regions overlap near {bad.tolist()}")

    # -- evaluation ---------------------------------------------------------

    def active_piece(self, x) -> int | None:
        """Index of the containing region, or None when outside all of them."""
        pt = np.asarray(x, dtype=np.float64)
        hits = [i for i, p in enumerate(self.pieces) if p.contains(pt)]
        if len(hits) > 1:
            raise RegionOverlapError(f"point {pt.tolist()} lies in regions {hits}")
        return hits[0] if hits else None

    def value(self, x) -> float:
        pt = np.asarray(x, dtype=np.float64)
        idx = self.active_piece(pt)
        if idx is None:
            return self.default_value
        p = self.pieces[idx]
        return float(np.dot(p.w, pt) + p.b)

    def grad(self, x) -> np.ndarray:
        idx = self.active_piece(x)
        if idx is None:
            return np.zeros(self.dim)
        return np.asarray(self.pieces[idx].w, dtype=np.float64)

    def grad_many(self, pts: np.ndarray) -> np.ndarray:
        """Gradients at a batch of points (rows); vectorized region lookup."""
        pts = np.asarray(pts, dtype=np.float64)
        out = np.zeros_like(pts)
        claimed = np.zeros(pts.shape[0], dtype=bool)
        for p in self.pieces:
            inside = np.ones(pts.shape[0], dtype=bool)
            for h in p.halfspaces:
                v = pts @ np.asarray(h.normal)
                inside &= (v < h.offset) if h.strict else (v <= h.offset)
            if np.any(inside & claimed):
                i = int(np.argmax(inside & claimed))
                raise RegionOverlapError(f"point {pts[i].tolist()} lies in two regions")
            out[inside] = p.w
            claimed |= inside
        return out


def evaluate_pwl(m: PwlModel, x) -> float:
    return m.value(x)


# ---------------------------------------------------------------------------
# Closed-form linear-path attribution
# ---------------------------------------------------------------------------


@dataclass
class PathSegments:
    """Boundary crossings of the segment x' -> x and each interval's piece."""

    crossings: list[float]
    piece_per_interval: list[int | None] = field(default_factory=list)

    def intervals(self) -> list[tuple[float, float]]:
        knots = [0.0, *self.crossings, 1.0]
        return list(zip(knots[:-1], knots[1:]))


def segment_path(m: PwlModel, x, x_prime) -> PathSegments:
    """Split alpha in (0,1) at every region-boundary crossing of the segment.

    Crossing candidates come from intersecting each halfspace hyperplane
    with the line x' + alpha (x - x'); duplicates collapse within 1e-12.
    The active piece of each open interval is read at its midpoint.
    """
    a = np.asarray(x_prime, dtype=np.float64)
    d = np.asarray(x, dtype=np.float64) - a
    alphas: list[float] = []
    for p in m.pieces:
        for h in p.halfspaces:
            normal = np.asarray(h.normal)
            denom = float(normal @ d)
            if denom == 0.0:
                continue
            alpha = (h.offset - float(normal @ a)) / denom
            if 0.0 < alpha < 1.0:
                alphas.append(alpha)
    alphas.sort()
    crossings: list[float] = []
    for alpha in alphas:
        if not crossings or alpha - crossings[-1] > DEDUP_TOL:
            crossings.append(alpha)
    seg = PathSegments(crossings)
    for lo, hi in seg.intervals():
        mid = a + 0.5 * (lo + hi) * d
        seg.piece_per_interval.append(m.active_piece(mid))
    return seg


def exact_path_attribution(m: PwlModel, x, x_prime) -> np.ndarray:
    """Closed-form linear-path attribution: (x_i - x'_i) * sum_len * w_i.

    Intervals whose midpoint falls outside every region contribute zero
    gradient.  x == x' yields the zero vector.
    """
    xv = np.asarray(x, dtype=np.float64)
    bv = np.asarray(x_prime, dtype=np.float64)
    if xv.shape != bv.shape or xv.shape != (m.dim,):
        raise ValueError(f"points must be {m.dim}-vectors")
    if np.array_equal(xv, bv):
        return np.zeros(m.dim)
    seg = segment_path(m, xv, bv)
    avg_grad = np.zeros(m.dim)
    for (lo, hi), idx in zip(seg.intervals(), seg.piece_per_interval):
        if idx is not None:
            avg_grad += (hi - lo) * np.asarray(m.pieces[idx].w)
    return (xv - bv) * avg_grad


# ---------------------------------------------------------------------------
# Built-in demonstration model
# ---------------------------------------------------------------------------

#: Two-piece model whose zero-baseline attributions rank the features
#: against the weights of the active piece: U1 = {x1,x2 <= 1} with weights
#: (1, 4), U2 = {x1,x2 > 1} with weights (4, 1), 0 elsewhere.
EXAMPLE1_DOC = {
    "kind": "pwl",
    "dim": 2,
    "default_value": 0.0,
    "pieces": [
        {
            "halfspaces": [
                {"normal": [1.0, 0.0], "offset": 1.0, "strict": False},
                {"normal": [0.0, 1.0], "offset": 1.0, "strict": False},
            ],
            "w": [1.0, 4.0],
            "b": 1.0,
        },
        {
            "halfspaces": [
                {"normal": [-1.0, 0.0], "offset": -1.0, "strict": True},
                {"normal": [0.0, -1.0], "offset": -1.0, "strict": True},
            ],
            "w": [4.0, 1.0],
            "b": 2.0,
        },
    ],
}

#: Values printed alongside this construction in the source write-up; direct
#: evaluation of the function as defined does not reproduce them.  Kept so
#: reports can state the discrepancy instead of silently replacing either side.
EXAMPLE1_QUOTED_ZERO_BASELINE = {"[1.5, 1.5]": [3.5, 6.5], "[4.0, 4.0]": [20.0, 19.0]}


def pwl_from_document(doc: dict) -> PwlModel:
    if doc.get("kind") != "pwl":
        raise ValueError(f"expected document kind 'pwl', got {doc.get('kind')!r}")
    pieces = []
    for rec in doc["pieces"]:
        hs = [Halfspace(tuple(h["normal"]), float(h["offset"]), bool(h.get("strict", False)))
              for h in rec["halfspaces"]]
        pieces.append(PwlPiece(tuple(hs), tuple(rec["w"]), float(rec["b"])))
    return PwlModel(pieces, float(doc.get("default_value", 0.0)))


def pwl_to_document(m: PwlModel) -> dict:
    return {
        "kind": "pwl",
        "dim": m.dim,
        "default_value": m.default_value,
        "pieces": [
            {
                "halfspaces": [
                    {"normal": list(h.normal), "offset": h.offset, "strict": h.strict}
                    for h in p.halfspaces
                ],
                "w": list(p.w),
                "b": p.b,
            }
            for p in m.pieces
        ],
    }


_BUILTINS = {"example1": EXAMPLE1_DOC}


def builtin_pwl(name: str) -> PwlModel:
    try:
        return pwl_from_document(_BUILTINS[name])
    except KeyError:
        raise KeyError(f"unknown built-in pwl model {name!r}; available: {sorted(_BUILTINS)}") from None
