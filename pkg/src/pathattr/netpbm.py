"""Netpbm image IO: PGM (P2 ASCII, P5 binary) and PPM (P6 binary).

Pixel values scale to [0, 1] on read; writing quantizes back to the
maxval grid with round-to-nearest, so a round trip loses at most
1/(2*maxval) per sample.  Color images load channel-first as (3, H, W).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import TensorF, as_array

MAXVALS = (255, 65535)


class ImageFormatError(ValueError):
    """Malformed netpbm header or truncated payload."""


def _parse_header(blob: bytes, n_fields: int):
    """Magic plus n_fields ASCII integers, skipping whitespace and # comments."""
    fields = []
    pos = 0
    if len(blob) < 2:
        raise ImageFormatError("file too short for a netpbm header")
    magic = blob[:2].decode("ascii", errors="replace")
    pos = 2
    while len(fields) < n_fields:
        if pos >= len(blob):
            raise ImageFormatError("truncated header")
        c = blob[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isdigit():
            start = pos
            while pos < len(blob) and blob[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise ImageFormatError(f"unexpected byte {c!r} in header")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise ImageFormatError("header must end with a whitespace byte")
    return magic, fields, pos + 1


def _check_dims(width: int, height: int, maxval: int) -> None:
    if width < 1 or height < 1:
        raise ImageFormatError(f"bad dimensions {width}x{height}")
    if maxval not in MAXVALS:
        raise ImageFormatError(f"maxval must be one of {MAXVALS}, got {maxval}")


def read_image(path) -> TensorF:
    blob = Path(path).read_bytes()
    magic = blob[:2].decode("ascii", errors="replace")
    if magic not in ("P2", "P5", "P6"):
        raise ImageFormatError(f"unsupported magic {magic!r} (need P2, P5 or P6)")
    magic, (width, height, maxval), payload_at = _parse_header(blob, 3)
    _check_dims(width, height, maxval)
    channels = 3 if magic == "P6" else 1
    n_samples = width * height * channels

    if magic == "P2":
        tokens = blob[payload_at - 1:].split()
        if len(tokens) < n_samples:
            raise ImageFormatError(f"truncated P2 payload: {len(tokens)} of {n_samples} samples")
        try:
            raw = np.array([int(t) for t in tokens[:n_samples]], dtype=np.float64)
        except ValueError as exc:
            raise ImageFormatError(f"non-integer P2 sample: {exc}") from None
    else:
        payload = blob[payload_at:]
        width_bytes = 2 if maxval > 255 else 1
        need = n_samples * width_bytes
        if len(payload) < need:
            raise ImageFormatError(f"truncated payload: {len(payload)} of {need} bytes")
        dtype = ">u2" if width_bytes == 2 else np.uint8
        raw = np.frombuffer(payload[:need], dtype=dtype).astype(np.float64)

    if np.any(raw > maxval):
        raise ImageFormatError("sample value exceeds maxval")
    data = raw / maxval
    if channels == 3:
        data = data.reshape(height, width, 3).transpose(2, 0, 1)
    else:
        data = data.reshape(height, width)
    return TensorF(data, 0.0, 1.0)


def write_image(t, path, maxval: int = 255, ascii_format: bool = False) -> None:
    """Quantize to the maxval grid and write; PPM for (3, H, W), PGM otherwise."""
    arr = as_array(t)
    if maxval not in MAXVALS:
        raise ImageFormatError(f"maxval must be one of {MAXVALS}, got {maxval}")
    if arr.ndim == 3 and arr.shape[0] == 3:
        magic = "P6"
        height, width = arr.shape[1], arr.shape[2]
        samples = arr.transpose(1, 2, 0).ravel()
        if ascii_format:
            raise ImageFormatError("no ASCII variant for PPM output")
    elif arr.ndim == 2:
        magic = "P2" if ascii_format else "P5"
        height, width = arr.shape
        samples = arr.ravel()
    elif arr.ndim == 3 and arr.shape[0] == 1:
        magic = "P2" if ascii_format else "P5"
        height, width = arr.shape[1], arr.shape[2]
        samples = arr.ravel()
    else:
        raise ImageFormatError(f"cannot write shape {arr.shape} as PGM/PPM")

    quantized = np.rint(np.clip(samples, 0.0, 1.0) * maxval).astype(np.int64)
    header = f"{magic}\n{width} {height}\n{maxval}\n".encode("ascii")
    if magic == "P2":
        body = b"\n".join(b" ".join(str(v).encode() for v in quantized[r * width:(r + 1) * width])
                          for r in range(height)) + b"\n"
    else:
        dtype = ">u2" if maxval > 255 else np.uint8
        body = quantized.astype(dtype).tobytes()
    Path(path).write_bytes(header + body)
