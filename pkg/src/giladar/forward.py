"""Time-resolved bucket signal: echoes, detector noise, digitisation, slicing.

Sample ``j`` of a trace holds the energy arriving in the trace-local interval
``[j, j + 1) * dt``; local time 0 corresponds to the common round trip
``2 * range_l0 / c``. The echo of depth ``z`` is centred on
``cfg.t0 + 2 z / c`` so that depth 0 lands on the centre of ``cfg.ref_slice``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from . import kernels
from . import rng as _rng
from .errors import ConfigError, DimensionError, FormatError, InsufficientDataError
from .geometry import GridSpec, OpticsConfig, pulse_support
from .scene import Scene, validate_depths
from .speckle import SpeckleFrame, generate_intensities

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True, eq=False)
class PulseShape:
    """Emitted pulse; ``samples`` is the profile at zero delay, unit area."""

    width: float
    profile: str
    dt: float

    def __post_init__(self):
        if not (self.width > 0 and self.dt > 0):
            raise ConfigError("pulse width and sample interval must be positive")
        if self.profile not in ("rect", "gaussian"):
            raise ConfigError(f"unknown pulse profile {self.profile!r}")

    @classmethod
    def from_config(cls, cfg: OpticsConfig) -> "PulseShape":
        return cls(cfg.pulse_width, cfg.pulse_profile, cfg.dt)

    @property
    def support(self) -> float:
        return self.width if self.profile == "rect" else 4.0 * self.width

    def cdf(self, t):
        """Fraction of the pulse energy emitted before ``t`` (support starts at 0)."""
        t = np.asarray(t, dtype=np.float64)
        if self.profile == "rect":
            return np.clip(t / self.width, 0.0, 1.0)
        sigma = self.width * _FWHM_TO_SIGMA
        half = 2.0 * self.width
        lo, hi = ndtr(-half / sigma), ndtr(half / sigma)
        inside = (ndtr((t - half) / sigma) - lo) / (hi - lo)
        return np.where(t <= 0.0, 0.0, np.where(t >= self.support, 1.0, inside))

    @property
    def samples(self) -> np.ndarray:
        n = int(math.ceil(self.support / self.dt - 1e-9))
        edges = np.arange(n + 1) * self.dt
        return np.diff(self.cdf(edges)) / self.dt

    def binned(self, delay: float, n_samples: int, first: int | None = None):
        """Energy per sample of the pulse delayed by ``delay``.

        Returns ``(first_sample, coefficients)``; the coefficient block has a
        fixed length so that every delay yields the same shape.
        """
        length = int(math.ceil(self.support / self.dt - 1e-9)) + 1
        if first is None:
            first = int(math.floor(delay / self.dt))
        first = min(max(first, 0), n_samples - length)
        if first < 0:
            raise ConfigError("pulse support exceeds the trace window")
        edges = (first + np.arange(length + 1)) * self.dt - delay
        coef = np.diff(self.cdf(edges))
        return first, coef


@dataclass(frozen=True)
class NoiseModel:
    """Detector chain: Poisson photon statistics, background, quantisation.

    A noiseless sample value ``v`` becomes ``Poisson(photon_scale * v +
    background_rate) / photon_scale`` with shot noise on, or
    ``v + Poisson(background_rate) / photon_scale`` with it off.
    Quantisation maps ``[0, full_scale]`` onto ``2**bits`` levels.
    """

    photon_scale: float = 1000.0
    background_rate: float = 0.0
    quantization_bits: int | None = None
    enable_shot_noise: bool = True
    full_scale: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.photon_scale) and self.photon_scale > 0):
            raise ConfigError(f"photon_scale must be positive, got {self.photon_scale!r}")
        if not (math.isfinite(self.background_rate) and self.background_rate >= 0):
            raise ConfigError(f"background_rate must be >= 0, got {self.background_rate!r}")
        if self.quantization_bits is not None:
            if not (isinstance(self.quantization_bits, int) and 1 <= self.quantization_bits <= 32):
                raise ConfigError("quantization_bits must be an integer in 1..32 or None")
            if self.full_scale is None or not self.full_scale > 0:
                raise ConfigError("quantization needs a positive full_scale")

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(enable_shot_noise=False)

    @property
    def is_noiseless(self) -> bool:
        return not self.enable_shot_noise and self.background_rate == 0 and self.quantization_bits is None

    def apply(self, clean: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        out = clean
        lam = self.photon_scale
        if self.enable_shot_noise:
            out = gen.poisson(lam * np.clip(clean, 0.0, None) + self.background_rate) / lam
        elif self.background_rate > 0:
            out = clean + gen.poisson(self.background_rate, size=clean.shape) / lam
        if self.quantization_bits is not None:
            levels = 2**self.quantization_bits - 1
            fs = self.full_scale
            out = np.rint(np.clip(out, 0.0, fs) * (levels / fs)) * (fs / levels)
        return out

    def to_dict(self) -> dict:
        return {
            "photon_scale": self.photon_scale,
            "background_rate": self.background_rate,
            "quantization_bits": self.quantization_bits,
            "enable_shot_noise": self.enable_shot_noise,
            "full_scale": self.full_scale,
        }


@dataclass(frozen=True, eq=False)
class BucketTrace:
    samples: np.ndarray
    t_start: float = 0.0


@dataclass(frozen=True, eq=False)
class SliceVector:
    B: np.ndarray

    @property
    def m(self) -> int:
        return self.B.shape[0]


class EchoModel:
    """Per-pixel echo placement for one scene, shared by all measurements.

    Only pixels that return light are kept; ``pixels`` are flat indices into
    the grid. Pixels at one depth share an echo group (``group``), whose
    first sample and per-sample pulse energies are ``start`` and ``coef``.
    """

    def __init__(self, scene: Scene, cfg: OpticsConfig, pulse: PulseShape | None = None):
        if scene.grid.shape != (cfg.grid_ny, cfg.grid_nx):
            raise DimensionError(
                f"scene grid {scene.grid.shape} does not match config grid {(cfg.grid_ny, cfg.grid_nx)}"
            )
        pulse = pulse or PulseShape.from_config(cfg)
        if pulse.support > cfg.n_samples * cfg.dt:
            raise ConfigError("pulse support exceeds the trace window")
        validate_depths(scene, cfg)
        self.cfg = cfg
        self.pulse = pulse
        self.grid = scene.grid
        lit = (scene.mask & (scene.reflectivity > 0)).ravel()
        self.pixels = np.flatnonzero(lit)
        self.reflectivity = scene.reflectivity.ravel()[self.pixels]
        depths = scene.depth.ravel()[self.pixels]
        n = cfg.n_samples
        length = int(math.ceil(pulse.support / pulse.dt - 1e-9)) + 1
        # one echo group per distinct depth
        uniq, self.group = np.unique(depths, return_inverse=True)
        self.group = self.group.astype(np.int64).ravel()
        self.start = np.zeros(uniq.size, dtype=np.int64)
        self.coef = np.zeros((uniq.size, length))
        for g, z in enumerate(uniq):
            delay = cfg.t0 + 2.0 * z / cfg.c_light - pulse.support / 2.0
            first, coef = pulse.binned(delay, n)
            if abs(coef.sum() - 1.0) > 1e-9:
                raise ConfigError(f"echo from depth {z:.3f} m falls outside the trace window")
            self.start[g], self.coef[g] = first, coef

    def clean_traces(self, intensities: np.ndarray) -> np.ndarray:
        """Noiseless traces for a stack of illumination patterns ``(K, ny, nx)``."""
        flat = np.asarray(intensities).reshape(len(intensities), -1)
        return kernels.render_traces(
            flat, self.pixels, self.reflectivity, self.group, self.start, self.coef, self.cfg.n_samples
        )


def simulate_return(
    scene: Scene,
    frame: SpeckleFrame,
    pulse: PulseShape,
    noise: NoiseModel,
    cfg: OpticsConfig,
    rng_substream: np.random.Generator,
    echo: EchoModel | None = None,
) -> BucketTrace:
    if frame.shape != scene.grid.shape:
        raise DimensionError(f"frame shape {frame.shape} does not match scene grid {scene.grid.shape}")
    echo = echo or EchoModel(scene, cfg, pulse)
    clean = echo.clean_traces(frame.intensity[None])[0]
    return BucketTrace(noise.apply(clean, rng_substream), 2.0 * cfg.range_l0 / cfg.c_light)


def bin_traces(samples: np.ndarray, samples_per_slice: int) -> np.ndarray:
    """Sum consecutive groups of ``samples_per_slice`` along the last axis."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    if n % samples_per_slice:
        raise DimensionError(f"trace length {n} is not a multiple of {samples_per_slice} samples per slice")
    return samples.reshape(*samples.shape[:-1], n // samples_per_slice, samples_per_slice).sum(axis=-1)


def bin_trace(trace: BucketTrace, cfg: OpticsConfig) -> SliceVector:
    return SliceVector(bin_traces(trace.samples, cfg.samples_per_slice))


class Measurement(NamedTuple):
    index: int
    frame: SpeckleFrame
    slices: SliceVector


def simulate_batch(
    echo: EchoModel,
    noise: NoiseModel,
    master_seed: int,
    indices: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Reference frames ``(K, ny, nx)`` and slice vectors ``(K, m)``, both float32.

    Measurement ``k`` is a pure function of ``(master_seed, k)``; float32 is
    the recorded precision of both detectors.
    """
    cfg = echo.cfg
    frames = generate_intensities(
        master_seed, indices, echo.grid, cfg.speckle_corr_len_target, cfg.speckle_aperture
    )
    clean = echo.clean_traces(frames)
    if not noise.is_noiseless:
        for i, k in enumerate(indices):
            clean[i] = noise.apply(clean[i], _rng.substream(master_seed, k, _rng.NOISE))
    return frames, bin_traces(clean, cfg.samples_per_slice).astype(np.float32)


def run_campaign(
    scene: Scene,
    cfg: OpticsConfig,
    noise: NoiseModel,
    N: int,
    master_seed: int,
    indices: Sequence[int] | None = None,
    batch: int = 256,
) -> Iterator[Measurement]:
    """Yield ``N`` measurement pairs (or those listed in ``indices``)."""
    if N < 2:
        raise InsufficientDataError(f"a campaign needs at least 2 measurements, got {N}")
    seed = _rng.check_seed(master_seed)
    echo = EchoModel(scene, cfg)
    order = list(range(N)) if indices is None else [int(k) for k in indices]
    for k in order:
        if not 0 <= k < N:
            raise IndexError(f"measurement index {k} outside 0..{N - 1}")
    for lo in range(0, len(order), batch):
        chunk = order[lo : lo + batch]
        frames, slices = simulate_batch(echo, noise, seed, chunk)
        for k, img, b in zip(chunk, frames, slices):
            yield Measurement(k, SpeckleFrame(img, k, seed), SliceVector(b))


# -- measurement record ------------------------------------------------------

RECORD_MAGIC = b"GIRC"
RECORD_VERSION = 1
_RECORD_HEADER = struct.Struct("<4sIIIIQQ")


class RecordHeader(NamedTuple):
    nx: int
    ny: int
    m: int
    N: int
    master_seed: int


class RecordWriter:
    """Sequential writer; measurements must arrive in index order."""

    def __init__(self, path, header: RecordHeader):
        self.path = Path(path)
        self.header = header
        self.count = 0
        try:
            self._fh = open(self.path, "wb")
            self._fh.write(
                _RECORD_HEADER.pack(RECORD_MAGIC, RECORD_VERSION, header.nx, header.ny, header.m,
                                    header.N, header.master_seed)
            )
        except OSError as exc:
            raise FormatError(f"cannot write record {self.path}: {exc}") from exc

    def write(self, frames: np.ndarray, slices: np.ndarray) -> None:
        h = self.header
        frames = np.asarray(frames, dtype="<f4").reshape(-1, h.ny * h.nx)
        slices = np.asarray(slices, dtype="<f4").reshape(-1, h.m)
        if len(frames) != len(slices):
            raise DimensionError("frame and slice batches differ in length")
        block = np.concatenate([frames, slices], axis=1)
        try:
            self._fh.write(block.tobytes())
        except OSError as exc:
            raise FormatError(
                f"write to {self.path} failed at measurement {self.count}: {exc}"
            ) from exc
        self.count += len(block)

    def close(self) -> None:
        self._fh.close()
        if self.count != self.header.N:
            raise FormatError(f"record {self.path} holds {self.count} of {self.header.N} measurements")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


def read_record_header(path) -> RecordHeader:
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_RECORD_HEADER.size)
    except OSError as exc:
        raise FormatError(f"cannot read record {path}: {exc}") from exc
    if len(raw) < _RECORD_HEADER.size:
        raise FormatError(f"{path}: truncated record header")
    magic, version, nx, ny, m, n, seed = _RECORD_HEADER.unpack(raw)
    if magic != RECORD_MAGIC:
        raise FormatError(f"{path}: bad record magic {magic!r}")
    if version != RECORD_VERSION:
        raise FormatError(f"{path}: unsupported record version {version}")
    return RecordHeader(nx, ny, m, n, seed)


def iter_record(path, batch: int = 256) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(first_index, frames (K, ny, nx), slices (K, m))`` blocks in order."""
    h = read_record_header(path)
    width = h.nx * h.ny + h.m
    with open(path, "rb") as fh:
        fh.seek(_RECORD_HEADER.size)
        done = 0
        while done < h.N:
            want = min(batch, h.N - done)
            raw = fh.read(4 * width * want)
            got = len(raw) // (4 * width)
            if got < want:
                raise FormatError(f"{path}: record truncated at measurement {done + got}")
            block = np.frombuffer(raw, dtype="<f4").reshape(want, width)
            frames = block[:, : h.nx * h.ny].reshape(want, h.ny, h.nx).astype(np.float32)
            slices = block[:, h.nx * h.ny :].astype(np.float32)
            yield done, frames, slices
            done += want
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {h.N} measurements")
