"""Attribution output files, meta records, and document loading.

Every attribution run emits three artifacts per input: full-precision
flat scores (text), a min-max normalized grayscale render (PGM), and a
meta record (JSON) embedding every hyper-parameter plus a digest, so any
completed run can be re-executed bit-identically from the meta alone.
Files are written atomically (temp + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .hashing import sha256_digest
from .model import ModelFormatError, load_model
from .netpbm import write_image
from .paths import AttributionMap
from .pwl import pwl_from_document


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def load_document(path):
    """Load a model or pwl document by its 'kind' field."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from None
    kind = doc.get("kind")
    if kind == "model":
        return load_model(path)
    if kind == "pwl":
        return pwl_from_document(doc)
    raise ModelFormatError(f"{path}: unknown document kind {kind!r}")


def file_sha256(path) -> str:
    import hashlib
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Attribution output
# ---------------------------------------------------------------------------


def scores_to_text(scores: np.ndarray) -> str:
    """Flat %.17g values (one per line) with a shape header; exact round trip."""
    lines = ["# shape " + " ".join(str(d) for d in scores.shape)]
    lines.extend(f"{v:.17g}" for v in scores.ravel())
    return "\n".join(lines) + "\n"


def scores_from_text(text: str) -> np.ndarray:
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("# shape"):
        raise ValueError("scores file must start with a '# shape ...' header")
    shape = tuple(int(tok) for tok in lines[0].split()[2:])
    values = np.array([float(line) for line in lines[1:] if line.strip()], dtype=np.float64)
    return values.reshape(shape)


def render_grayscale(scores: np.ndarray) -> np.ndarray:
    """Min-max normalized 2-D render; channel axes sum out; constant maps -> 0.5."""
    s = scores
    if s.ndim == 3:
        s = s.sum(axis=0)
    elif s.ndim == 1:
        s = s[None, :]
    elif s.ndim != 2:
        raise ValueError(f"cannot render rank-{s.ndim} scores")
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return np.full(s.shape, 0.5)
    return (s - lo) / (hi - lo)


def write_attribution(amap: AttributionMap, out_dir, stem: str = "attribution") -> dict:
    """Emit scores text, grayscale render, and the digested meta record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "scores": out / f"{stem}.scores.txt",
        "render": out / f"{stem}.render.pgm",
        "meta": out / f"{stem}.meta.json",
    }
    atomic_write_text(paths["scores"], scores_to_text(amap.scores))

    render = render_grayscale(amap.scores)
    tmp = paths["render"].with_name(f".{paths['render'].name}.tmp")
    write_image(render, tmp)
    os.replace(tmp, paths["render"])

    meta = dict(amap.meta)
    meta["shape"] = list(amap.scores.shape)
    if amap.scores.ndim == 3:
        meta["channel_reduction"] = "sum over axis 0 for the render"
    meta["digest"] = sha256_digest(meta)
    atomic_write_text(paths["meta"], json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {k: str(v) for k, v in paths.items()}
