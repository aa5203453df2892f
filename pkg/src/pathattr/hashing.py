"""Canonical JSON digests for provenance records."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def _canonical(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))


def sha256_digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()
