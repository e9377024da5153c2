"""Pseudo-thermal speckle frames.

A frame is the squared modulus of a circular complex Gaussian field whose
spatial spectrum is shaped so that the intensity autocovariance has the
requested full width at half maximum. The same array serves the CCD and the
target plane; only the physical pitch differs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

from . import rng as _rng
from .errors import ConfigError, DimensionError, FormatError, InsufficientDataError
from .geometry import GridSpec
from .pgm import to_gray, write_pgm

FRAME_MAGIC = b"GISF"
_FRAME_HEADER = struct.Struct("<4sIII")

# |2 J1(v) / v|**2 falls to one half at v = 1.6163
_AIRY_HALF = 1.616339948310703


@dataclass(frozen=True, eq=False)
class SpeckleFrame:
    intensity: np.ndarray
    frame_index: int
    rng_seed: int

    def __post_init__(self):
        self.intensity.setflags(write=False)

    @property
    def shape(self):
        return self.intensity.shape


def corr_len_pixels(grid: GridSpec, corr_len_target: float) -> float:
    """Requested speckle size in target-grid pixels.

    The lower bound is one pixel: a finer speckle cannot be represented on
    the grid.
    """
    if grid.nx < 1 or grid.ny < 1:
        raise ConfigError("speckle grid must be non-empty")
    ell = corr_len_target / grid.pitch_target
    if not np.isfinite(ell) or ell < 1.0:
        raise ConfigError(
            f"speckle correlation length {corr_len_target:g} m is below one target pixel "
            f"({grid.pitch_target:g} m)"
        )
    return float(ell)


@lru_cache(maxsize=16)
def _transfer(ny: int, nx: int, ell: float, aperture: str) -> np.ndarray:
    fy = np.fft.fftfreq(ny)[:, None]
    fx = np.fft.fftfreq(nx)[None, :]
    if aperture == "gaussian":
        # field correlation exp(-2 ln2 r^2 / ell^2) sampled on the periodic
        # lattice; its DFT is the power spectrum, positive by construction
        dy = np.minimum(np.arange(ny), ny - np.arange(ny))[:, None]
        dx = np.minimum(np.arange(nx), nx - np.arange(nx))[None, :]
        mu = np.exp(-2.0 * np.log(2.0) * (dx**2 + dy**2) / ell**2)
        power = np.clip(np.fft.fft2(mu).real, 0.0, None)
    elif aperture == "disk":
        cutoff = _AIRY_HALF / (np.pi * ell)
        power = ((fx**2 + fy**2) <= cutoff**2).astype(float)
    else:
        raise ConfigError(f"unknown speckle aperture {aperture!r}")
    power *= power.size / power.sum()
    h = np.sqrt(power)
    h.setflags(write=False)
    return h


def generate_intensities(
    master_seed: int,
    indices: Sequence[int],
    grid: GridSpec,
    corr_len_target: float,
    aperture: str = "gaussian",
) -> np.ndarray:
    """Float32 stack ``(len(indices), ny, nx)`` of speckle intensities.

    Row ``i`` depends only on ``(master_seed, indices[i])``.
    """
    ell = corr_len_pixels(grid, corr_len_target)
    h = _transfer(grid.ny, grid.nx, round(ell, 12), aperture)
    white = np.empty((len(indices), 2, grid.ny, grid.nx))
    for i, k in enumerate(indices):
        _rng.substream(master_seed, k, _rng.SPECKLE).standard_normal(out=white[i])
    field = white[:, 0] + 1j * white[:, 1]
    field = sfft.fft2(field, axes=(-2, -1), overwrite_x=True)
    field *= h * np.sqrt(0.5)
    field = sfft.ifft2(field, axes=(-2, -1), overwrite_x=True)
    return (field.real**2 + field.imag**2).astype(np.float32)


def generate_frame(
    master_seed: int,
    frame_index: int,
    grid: GridSpec,
    corr_len_target: float,
    aperture: str = "gaussian",
) -> SpeckleFrame:
    intensity = generate_intensities(master_seed, [frame_index], grid, corr_len_target, aperture)[0]
    return SpeckleFrame(intensity, int(frame_index), _rng.check_seed(master_seed))


def sample_on_target(frame: SpeckleFrame, grid: GridSpec) -> np.ndarray:
    """Target-plane illumination: the reference pattern, index for index."""
    if frame.shape != grid.shape:
        raise DimensionError(f"frame shape {frame.shape} does not match grid {grid.shape}")
    return frame.intensity


class EnsembleStats(NamedTuple):
    mean_map: np.ndarray
    var_map: np.ndarray
    contrast: float


def frame_ensemble_stats(frames) -> EnsembleStats:
    """Per-pixel mean and variance over frames, plus global contrast sqrt(<var>)/<mean>."""
    if isinstance(frames, np.ndarray):
        stack = np.asarray(frames, dtype=np.float64)
    else:
        stack = np.stack([np.asarray(getattr(f, "intensity", f), dtype=np.float64) for f in frames])
    if stack.ndim != 3 or stack.shape[0] < 2:
        raise InsufficientDataError("ensemble statistics need at least 2 frames")
    mean_map = stack.mean(axis=0)
    var_map = stack.var(axis=0, ddof=1)
    mean = mean_map.mean()
    contrast = float(np.sqrt(var_map.mean()) / mean) if mean > 0 else 0.0
    return EnsembleStats(mean_map, var_map, contrast)


def write_frame(path, frame: SpeckleFrame) -> None:
    """16-byte header (magic, nx, ny, frame_index; little-endian u32) + float32 rows."""
    ny, nx = frame.shape
    data = np.ascontiguousarray(frame.intensity, dtype="<f4")
    try:
        with open(path, "wb") as fh:
            fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, nx, ny, frame.frame_index))
            fh.write(data.tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_frame(path, master_seed: int = 0) -> SpeckleFrame:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(data) < _FRAME_HEADER.size:
        raise FormatError(f"{path}: truncated frame header")
    magic, nx, ny, index = _FRAME_HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise FormatError(f"{path}: bad frame magic {magic!r}")
    if len(data) != _FRAME_HEADER.size + 4 * nx * ny:
        raise FormatError(f"{path}: frame payload size mismatch")
    intensity = np.frombuffer(data, dtype="<f4", offset=_FRAME_HEADER.size).reshape(ny, nx)
    return SpeckleFrame(intensity.astype(np.float32), index, master_seed)


def export_frame_pgm(path, frame: SpeckleFrame) -> None:
    """8-bit preview, linearly scaled so the frame maximum is white."""
    img = np.asarray(frame.intensity, dtype=np.float64)
    top = img.max()
    write_pgm(path, to_gray(img / top if top > 0 else img))
