"""Optical-system parameters and the scale relations between CCD pixels,
target footprint, field of view and time bins."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, FormatError

C_LIGHT = 299_792_458.0

_POSITIVE = (
    "wavelength",
    "pulse_width",
    "sample_rate",
    "slice_width",
    "f0",
    "mag_ref",
    "range_l0",
    "pixel_pitch",
    "speckle_corr_len_target",
    "c_light",
)


@dataclass(frozen=True)
class OpticsConfig:
    """All system parameters, SI units.

    ``ref_slice`` is the 1-based time slice whose center receives the
    centroid of the echo from depth 0 (the nominal range).
    """

    wavelength: float = 532e-9
    pulse_width: float = 10e-9
    sample_rate: float = 1e9
    slice_width: float = 4e-9
    f0: float = 0.360
    mag_ref: float = 1.75
    range_l0: float = 1000.0
    pixel_pitch: float = 112e-6
    grid_nx: int = 64
    grid_ny: int = 64
    n_slices: int = 32
    speckle_corr_len_target: float = 0.25
    c_light: float = C_LIGHT
    ref_slice: int = 4
    pulse_profile: str = "rect"
    speckle_aperture: str = "gaussian"

    def __post_init__(self):
        for name in _POSITIVE:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a finite positive number, got {value!r}")
        for name in ("grid_nx", "grid_ny", "n_slices", "ref_slice"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.grid_nx < 2 or self.grid_ny < 2:
            raise ConfigError(f"grid must be at least 2x2, got {self.grid_nx}x{self.grid_ny}")
        if self.n_slices < 1:
            raise ConfigError(f"n_slices must be >= 1, got {self.n_slices}")
        if not 1 <= self.ref_slice <= self.n_slices:
            raise ConfigError(f"ref_slice must lie in 1..{self.n_slices}, got {self.ref_slice}")
        sps = self.sample_rate * self.slice_width
        if abs(sps - round(sps)) > 1e-9 * max(1.0, sps) or round(sps) < 1:
            raise ConfigError(
                f"sample_rate * slice_width must be a positive integer, got {sps!r}"
            )
        if self.pulse_profile not in ("rect", "gaussian"):
            raise ConfigError(f"pulse_profile must be 'rect' or 'gaussian', got {self.pulse_profile!r}")
        if self.speckle_aperture not in ("gaussian", "disk"):
            raise ConfigError(
                f"speckle_aperture must be 'gaussian' or 'disk', got {self.speckle_aperture!r}"
            )

    @property
    def samples_per_slice(self) -> int:
        return int(round(self.sample_rate * self.slice_width))

    @property
    def n_samples(self) -> int:
        return self.n_slices * self.samples_per_slice

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def t0(self) -> float:
        """Trace-local time of the reference slice center."""
        return slice_center_time(self.ref_slice, self)

    def replace(self, **changes) -> "OpticsConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "OpticsConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        for key in values:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        coerced = {}
        for key, value in values.items():
            default = known[key].default
            if isinstance(default, float) and not isinstance(value, bool):
                # YAML 1.1 reads exponent literals without a dot (1e-08) as strings
                try:
                    value = float(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"{key} must be a number, got {value!r}") from None
            coerced[key] = value
        return cls(**coerced)


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    pitch_ccd: float
    pitch_target: float = field(default=0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"grid must be non-empty, got {self.nx}x{self.ny}")
        if not (self.pitch_ccd > 0 and self.pitch_target > 0):
            raise ConfigError("grid pitches must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @classmethod
    def from_config(cls, cfg: OpticsConfig) -> "GridSpec":
        return cls(cfg.grid_nx, cfg.grid_ny, cfg.pixel_pitch, target_footprint(cfg))


def load_config(path) -> OpticsConfig:
    """Read a flat ``key: value`` YAML file. Unknown keys are an error."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    try:
        values = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not a valid key-value file: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: expected a flat key-value mapping")
    return OpticsConfig.from_dict(values)


def save_config(cfg: OpticsConfig, path) -> None:
    lines = ["# giladar optics configuration (SI units)"]
    for key, value in cfg.to_dict().items():
        lines.append(f"{key}: {value!r}" if not isinstance(value, str) else f"{key}: {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def scale_factor(cfg: OpticsConfig) -> float:
    """Lateral magnification from the CCD plane to the target plane."""
    return (cfg.range_l0 / cfg.f0) / cfg.mag_ref


def target_footprint(cfg: OpticsConfig) -> float:
    """Side length of one CCD pixel projected onto the target (m)."""
    return cfg.pixel_pitch * scale_factor(cfg)


def fov_on_target(cfg: OpticsConfig) -> float:
    return cfg.grid_nx * target_footprint(cfg)


def axial_bin_depth(cfg: OpticsConfig) -> float:
    """Range extent of one time slice: c * slice_width / 2."""
    return cfg.c_light * cfg.slice_width / 2.0


def slice_center_time(s: int, cfg: OpticsConfig) -> float:
    """Trace-local center time of 1-based slice ``s``."""
    return (s - 0.5) * cfg.slice_width


def slice_to_depth(s, cfg: OpticsConfig, t0: float | None = None):
    """Depth (m, relative to the nominal range) probed by slice ``s``.

    ``s`` is 1-based and may be an integer array. ``t0`` defaults to the
    center of ``cfg.ref_slice``.
    """
    arr = np.asarray(s)
    if arr.size and (np.any(arr < 1) or np.any(arr > cfg.n_slices)):
        raise IndexError(f"slice index out of range 1..{cfg.n_slices}: {s!r}")
    if t0 is None:
        t0 = cfg.t0
    depth = cfg.c_light * (slice_center_time(arr, cfg) - t0) / 2.0
    return float(depth) if arr.ndim == 0 else depth


def depth_to_slice(z, cfg: OpticsConfig):
    """Nearest 1-based slice for depth ``z`` (inverse of slice_to_depth).

    Halfway depths round up (toward the farther slice).
    """
    s = cfg.ref_slice + np.floor(np.asarray(z, dtype=float) / axial_bin_depth(cfg) + 0.5)
    s = s.astype(int)
    return int(s) if s.ndim == 0 else s


def depth_window(cfg: OpticsConfig, support: float) -> tuple[float, float]:
    """Range of depths whose whole echo (of duration ``support``) fits in the trace."""
    window = cfg.n_slices * cfg.slice_width
    zmin = (support / 2.0 - cfg.t0) * cfg.c_light / 2.0
    zmax = (window - support / 2.0 - cfg.t0) * cfg.c_light / 2.0
    return zmin, zmax


def pulse_support(cfg: OpticsConfig) -> float:
    """Duration of the emitted pulse's support: the full width for a rect
    profile, four FWHM for a (truncated) Gaussian."""
    return cfg.pulse_width if cfg.pulse_profile == "rect" else 4.0 * cfg.pulse_width
