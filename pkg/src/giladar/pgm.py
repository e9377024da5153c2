"""Minimal binary PGM (P5) reader/writer, 8- and 16-bit."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def write_pgm(path, image, maxval: int = 255) -> None:
    """Write integer ``image`` (rows x cols) as P5. Values must lie in [0, maxval]."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in 1..65535")
    if image.min(initial=0) < 0 or image.max(initial=0) > maxval:
        raise ValueError("pixel values outside [0, maxval]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(image.astype(dtype).tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def _tokens(data: bytes, count: int):
    """Return the first ``count`` whitespace-separated header tokens and the data offset."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return ``(image, maxval)`` from a P5 file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    tokens, offset = _tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    if len(data) - offset < nbytes:
        raise FormatError(f"{path}: truncated PGM pixel data")
    image = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    return image.reshape(height, width).astype(np.int64), maxval


def to_gray(values, maxval: int = 255) -> np.ndarray:
    """Map ``values`` in [0, 1] to integer gray levels."""
    return np.rint(np.clip(values, 0.0, 1.0) * maxval).astype(np.int64)
