"""Binary portable graymap (P5) reader/writer; 16-bit samples are big-endian."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path, img) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("graymap must be 2-D")
    if img.dtype == np.uint8:
        maxval, data = 255, img.tobytes()
    else:
        if img.min(initial=0) < 0 or img.max(initial=0) > 65535:
            raise ValueError("16-bit graymap values must lie in [0, 65535]")
        maxval, data = 65535, img.astype(">u2").tobytes()
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii") + data)


def _tokens(raw):
    """Yield (token, end offset) for the header, skipping comments."""
    i = 0
    while True:
        while i < len(raw) and raw[i:i + 1].isspace():
            i += 1
        if raw[i:i + 1] == b"#":
            while i < len(raw) and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j:j + 1].isspace():
            j += 1
        yield raw[i:j], j
        i = j


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tok = _tokens(raw)
    magic, _ = next(tok)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary graymap")
    cols = int(next(tok)[0])
    rows = int(next(tok)[0])
    maxval, end = next(tok)
    maxval = int(maxval)
    start = end + 1
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    n = rows * cols * np.dtype(dtype).itemsize
    if len(raw) < start + n:
        raise ValueError(f"{path}: truncated graymap")
    img = np.frombuffer(raw[start:start + n], dtype=dtype).reshape(rows, cols)
    return img.astype(np.uint16) if maxval >= 256 else img.copy()
