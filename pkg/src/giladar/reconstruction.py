"""Streaming intensity-fluctuation correlation between bucket slices and
reference frames.

For slice ``s`` and reference pixel ``x`` the estimate is

    dG[s, x] = <B_s I(x)> - <B_s> <I(x)>

over the measurement ensemble. The accumulator keeps only raw sums, so
partial results from independent workers combine by addition.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import kernels
from .errors import DimensionError, FormatError, InsufficientDataError
from .pgm import to_gray, write_pgm

STACK_MAGIC = b"GISK"
_STACK_HEADER = struct.Struct("<4sIIIQ")

NORMALIZATIONS = ("per_slice_minmax", "per_slice_zscore", "global_minmax")


class CorrelationAccumulator:
    """Running sums ``n``, ``sum_B``, ``sum_I`` and ``sum_BI`` in float64.

    ``sum_I`` is stored flat (``ny * nx``) and ``sum_BI`` as ``(m, ny * nx)``.
    """

    def __init__(self, m: int, ny: int, nx: int):
        self.m, self.ny, self.nx = int(m), int(ny), int(nx)
        self.n = 0
        self.sum_B = np.zeros(self.m)
        self.sum_I = np.zeros(self.ny * self.nx)
        self.sum_BI = np.zeros((self.m, self.ny * self.nx))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.m, self.ny, self.nx)

    def accumulate(self, I, B, index: int | None = None) -> "CorrelationAccumulator":
        """Add one measurement: reference frame ``I`` (ny, nx) and slices ``B`` (m,)."""
        I = getattr(I, "intensity", I)
        B = getattr(B, "B", B)
        return self.accumulate_batch(np.asarray(I)[None], np.asarray(B)[None], first_index=index)

    def accumulate_batch(self, frames, slices, first_index: int | None = None) -> "CorrelationAccumulator":
        frames = np.asarray(frames)
        slices = np.asarray(slices)
        k = len(frames)
        if frames.shape[1:] != (self.ny, self.nx) or slices.shape != (k, self.m):
            raise DimensionError(
                f"batch shapes {frames.shape}, {slices.shape} do not match accumulator {self.shape}"
            )
        bad = ~(np.isfinite(frames).reshape(k, -1).all(axis=1) & np.isfinite(slices).all(axis=1))
        if bad.any():
            pos = int(np.flatnonzero(bad)[0])
            label = pos if first_index is None else first_index + pos
            raise ValueError(f"non-finite value in measurement {label}")
        flat = frames.reshape(k, -1)
        self.n += k
        self.sum_B += slices.sum(axis=0, dtype=np.float64)
        self.sum_I += flat.sum(axis=0, dtype=np.float64)
        kernels.accumulate_products(self.sum_BI, slices, flat)
        return self

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        """New accumulator holding the union of both measurement sets."""
        if self.shape != other.shape:
            raise DimensionError(f"cannot merge accumulators of shape {self.shape} and {other.shape}")
        out = CorrelationAccumulator(*self.shape)
        out.n = self.n + other.n
        out.sum_B = self.sum_B + other.sum_B
        out.sum_I = self.sum_I + other.sum_I
        out.sum_BI = self.sum_BI + other.sum_BI
        return out

    __add__ = merge

    def finalize(self, cfg=None) -> "SliceStack":
        if self.n < 2:
            raise InsufficientDataError(f"need at least 2 measurements, have {self.n}")
        n = float(self.n)
        dg = self.sum_BI / n - np.outer(self.sum_B / n, self.sum_I / n)
        return SliceStack(dg.reshape(self.shape), self.n, cfg)


@dataclass(frozen=True, eq=False)
class SliceStack:
    """``dG`` has shape ``(m, ny, nx)``; slice ``s`` (1-based) is ``dG[s - 1]``."""

    dG: np.ndarray
    n_used: int
    cfg: object = None
    normalization: str | None = field(default=None)

    def __post_init__(self):
        self.dG.setflags(write=False)

    @property
    def m(self) -> int:
        return self.dG.shape[0]

    def slice(self, s: int) -> np.ndarray:
        if not 1 <= s <= self.m:
            raise IndexError(f"slice {s} outside 1..{self.m}")
        return self.dG[s - 1]


def _minmax(a: np.ndarray) -> np.ndarray:
    lo, hi = a.min(), a.max()
    if hi > lo:
        return (a - lo) / (hi - lo)
    return np.zeros_like(a)


def normalize_slices(stack: SliceStack, mode: str = "global_minmax") -> SliceStack:
    """Rescale for display or thresholding. Constant slices map to zeros.

    ``global_minmax`` maps ``[max(min, 0), max]`` of the whole stack onto
    ``[0, 1]``. The expected correlation is never negative (speckle intensity
    covariance is non-negative), so negative values are pure estimation noise
    and are clipped to 0 rather than being allowed to lift the noise floor.
    A stack without negative values gets a plain min-max map.
    """
    dg = np.asarray(stack.dG, dtype=np.float64)
    if mode == "global_minmax":
        lo, hi = max(dg.min(), 0.0), dg.max()
        out = np.clip((dg - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.zeros_like(dg)
    elif mode == "per_slice_minmax":
        out = np.stack([_minmax(s) for s in dg])
    elif mode == "per_slice_zscore":
        out = np.zeros_like(dg)
        for i, s in enumerate(dg):
            sd = s.std()
            if sd > 0:
                out[i] = (s - s.mean()) / sd
    else:
        raise ValueError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")
    return SliceStack(out, stack.n_used, stack.cfg, mode)


def reconstruct_stack(measurements: Iterable, m: int | None = None) -> SliceStack:
    """Accumulate ``(I, B)`` pairs (or Measurement tuples) and finalize."""
    acc = None
    for item in measurements:
        if hasattr(item, "frame"):
            I, B, idx = item.frame.intensity, item.slices.B, item.index
        else:
            (I, B), idx = item, None
        B = getattr(B, "B", B)
        I = getattr(I, "intensity", I)
        if acc is None:
            acc = CorrelationAccumulator(len(B) if m is None else m, *np.shape(I))
        acc.accumulate(I, B, idx)
    if acc is None:
        raise InsufficientDataError("no measurements")
    return acc.finalize()


def reconstruct_slice(measurements: Iterable, s: int) -> np.ndarray:
    """Tomographic image of 1-based slice ``s``."""
    return reconstruct_stack(measurements).slice(s)


def write_stack(path, stack: SliceStack) -> None:
    """Header (magic, m, nx, ny as u32; n_used as u64; little-endian) + float64 data."""
    m, ny, nx = stack.dG.shape
    try:
        with open(path, "wb") as fh:
            fh.write(_STACK_HEADER.pack(STACK_MAGIC, m, nx, ny, stack.n_used))
            fh.write(np.ascontiguousarray(stack.dG, dtype="<f8").tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write stack {path}: {exc}") from exc


def read_stack(path, cfg=None) -> SliceStack:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read stack {path}: {exc}") from exc
    if len(data) < _STACK_HEADER.size:
        raise FormatError(f"{path}: truncated stack header")
    magic, m, nx, ny, n_used = _STACK_HEADER.unpack_from(data)
    if magic != STACK_MAGIC:
        raise FormatError(f"{path}: bad stack magic {magic!r}")
    if len(data) != _STACK_HEADER.size + 8 * m * nx * ny:
        raise FormatError(f"{path}: stack payload size mismatch")
    dg = np.frombuffer(data, dtype="<f8", offset=_STACK_HEADER.size).reshape(m, ny, nx).copy()
    return SliceStack(dg, n_used, cfg)


def export_slices_pgm(stack: SliceStack, outdir, mode: str = "per_slice_minmax") -> list[Path]:
    """One 8-bit PGM per slice, ``slice_001.pgm`` ... (z-scores are clipped to +-3)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    norm = normalize_slices(stack, mode)
    paths = []
    for s, img in enumerate(norm.dG, start=1):
        if mode == "per_slice_zscore":
            img = (np.clip(img, -3.0, 3.0) + 3.0) / 6.0
        path = outdir / f"slice_{s:03d}.pgm"
        write_pgm(path, to_gray(img))
        paths.append(path)
    return paths
