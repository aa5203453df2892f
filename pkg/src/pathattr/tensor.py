"""Finite float64 arrays with an attached dynamic range.

``TensorF`` is the carrier for images, baselines, gradients and attribution
maps.  Construction rejects NaN/Inf; the dynamic range ``[lo, hi]`` travels
with the data so that clipping operations know the valid value band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TensorF:
    """Shaped array of finite reals plus its dynamic range ``[lo, hi]``."""

    data: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("TensorF must hold at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("TensorF values must be finite (no NaN/Inf)")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"invalid dynamic range [{self.lo}, {self.hi}]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def with_data(self, data: np.ndarray) -> "TensorF":
        """Same dynamic range, new values."""
        return TensorF(data, self.lo, self.hi)

    def clipped(self) -> "TensorF":
        """Values clipped into the dynamic range."""
        return self.with_data(np.clip(self.data, self.lo, self.hi))


def as_tensor(x, lo: float = 0.0, hi: float = 1.0) -> TensorF:
    """Coerce an array-like (or TensorF) to TensorF, validating finiteness."""
    if isinstance(x, TensorF):
        return x
    return TensorF(np.asarray(x, dtype=np.float64), lo, hi)


def as_array(x) -> np.ndarray:
    """The underlying float64 array of a TensorF or array-like."""
    if isinstance(x, TensorF):
        return x.data
    return np.asarray(x, dtype=np.float64)
