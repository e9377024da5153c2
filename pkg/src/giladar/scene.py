"""Targets: per-pixel reflectivity and depth on the target grid."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError
from .geometry import (
    GridSpec,
    OpticsConfig,
    axial_bin_depth,
    depth_to_slice,
    depth_window,
    pulse_support,
)
from .pgm import read_pgm

SCENE_KINDS = ("two_plane", "staircase", "facade", "landscape", "edge")


@dataclass(frozen=True, eq=False)
class Scene:
    """Reflectivity in [0, 1] and depth (m, relative to the nominal range).

    ``mask`` is True where the target returns light; elsewhere depth is NaN
    and the pixel contributes nothing.
    """

    reflectivity: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    grid: GridSpec
    name: str = "scene"

    def __post_init__(self):
        r = np.array(self.reflectivity, dtype=np.float64)
        z = np.array(self.depth, dtype=np.float64)
        m = np.array(self.mask, dtype=bool)
        if not (r.shape == z.shape == m.shape == self.grid.shape):
            raise DimensionError(
                f"scene arrays {r.shape}, {z.shape}, {m.shape} must all match grid {self.grid.shape}"
            )
        bad = np.argwhere(~((r >= 0.0) & (r <= 1.0)))
        if bad.size:
            i, j = bad[0]
            raise ConfigError(f"reflectivity {r[i, j]!r} at pixel (row={i}, col={j}) outside [0, 1]")
        bad = np.argwhere(m & ~np.isfinite(z))
        if bad.size:
            i, j = bad[0]
            raise ConfigError(f"non-finite depth at unmasked pixel (row={i}, col={j})")
        z[~m] = np.nan
        for name, arr in (("reflectivity", r), ("depth", z), ("mask", m)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def ground_truth_slices(self, cfg: OpticsConfig) -> np.ndarray:
        """1-based slice per pixel (0 where masked out)."""
        s = np.zeros(self.grid.shape, dtype=int)
        s[self.mask] = depth_to_slice(self.depth[self.mask], cfg)
        return s

    def occupied_slices(self, cfg: OpticsConfig) -> list[int]:
        lit = self.mask & (self.reflectivity > 0)
        return sorted({int(v) for v in np.atleast_1d(depth_to_slice(self.depth[lit], cfg))})


def _read_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: malformed CSV: {exc}") from exc


def load_scene(reflectivity_file, depth_file, grid: GridSpec, name: str | None = None) -> Scene:
    """Reflectivity from an 8-bit PGM (gray / maxval) or a CSV of values in [0, 1];
    depth from a CSV of meters with ``nan`` marking no return."""
    reflectivity_file = Path(reflectivity_file)
    if not reflectivity_file.exists():
        raise FormatError(f"missing reflectivity file {reflectivity_file}")
    if reflectivity_file.suffix.lower() == ".csv":
        refl = _read_csv(reflectivity_file)
    else:
        gray, maxval = read_pgm(reflectivity_file)
        refl = gray / float(maxval)
    depth = _read_csv(depth_file)
    for label, arr in (("reflectivity", refl), ("depth", depth)):
        if arr.shape != grid.shape:
            raise DimensionError(f"{label} file has shape {arr.shape}, grid is {grid.shape}")
    return Scene(refl, depth, np.isfinite(depth), grid, name or reflectivity_file.stem)


def save_depth_csv(path, depth: np.ndarray) -> None:
    """Row-major CSV, full double precision, ``nan`` for no return."""
    rows = [",".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row) for row in depth]
    try:
        Path(path).write_text("\n".join(rows) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def load_depth_csv(path) -> np.ndarray:
    return _read_csv(path)


def validate_depths(scene: Scene, cfg: OpticsConfig) -> None:
    """Every echo must fit inside the trace window."""
    if not scene.mask.any():
        return
    zmin, zmax = depth_window(cfg, pulse_support(cfg))
    lo, hi = np.nanmin(scene.depth), np.nanmax(scene.depth)
    if lo < zmin - 1e-12 or hi > zmax + 1e-12:
        raise ConfigError(
            f"scene depths [{lo:.3f}, {hi:.3f}] m exceed the trace window [{zmin:.3f}, {zmax:.3f}] m "
            f"({cfg.n_slices} slices of {axial_bin_depth(cfg):.4f} m)"
        )


def _frac(n, a):
    return int(round(n * a))


def make_test_scene(
    kind: str,
    grid: GridSpec,
    cfg: OpticsConfig,
    dz: float = 1.2,
    n: int = 4,
) -> Scene:
    """Synthetic targets.

    two_plane
        two laterally disjoint rectangles at depths 0 and ``dz``
    staircase
        ``n`` vertical strips stepping back by ``dz`` each
    facade
        building silhouette: front wall, recessed entrance, set-back upper
        floors and a roof structure, with darker window rows
    landscape
        disjoint trees and a house at distinct depths
    edge
        one rectangle at depth 0 whose right side is a vertical edge at
        the grid center column
    """
    ny, nx = grid.shape
    refl = np.zeros(grid.shape)
    depth = np.full(grid.shape, np.nan)
    rows, cols = np.mgrid[0:ny, 0:nx]

    if kind in ("two_plane", "staircase") and not dz > 0:
        raise ConfigError(f"dz must be positive, got {dz!r}")

    if kind == "two_plane":
        r0, r1 = _frac(ny, 0.375), _frac(ny, 0.625)
        for (c0, c1), z in (((_frac(nx, 0.125), _frac(nx, 0.375)), 0.0),
                            ((_frac(nx, 0.625), _frac(nx, 0.875)), dz)):
            refl[r0:r1, c0:c1] = 1.0
            depth[r0:r1, c0:c1] = z
    elif kind == "staircase":
        if n < 1:
            raise ConfigError(f"staircase needs at least one step, got {n}")
        r0, r1 = _frac(ny, 0.25), _frac(ny, 0.75)
        edges = np.linspace(_frac(nx, 0.125), _frac(nx, 0.875), n + 1).round().astype(int)
        for i in range(n):
            refl[r0:r1, edges[i]:edges[i + 1]] = 1.0
            depth[r0:r1, edges[i]:edges[i + 1]] = i * dz
    elif kind == "facade":
        step = axial_bin_depth(cfg) * 2
        body = (rows >= _frac(ny, 0.45)) & (rows < _frac(ny, 0.9)) & (cols >= _frac(nx, 0.1)) & (cols < _frac(nx, 0.9))
        upper = (rows >= _frac(ny, 0.25)) & (rows < _frac(ny, 0.45)) & (cols >= _frac(nx, 0.25)) & (cols < _frac(nx, 0.75))
        roof = (rows >= _frac(ny, 0.1)) & (rows < _frac(ny, 0.25)) & (cols >= _frac(nx, 0.42)) & (cols < _frac(nx, 0.58))
        entrance = (rows >= _frac(ny, 0.7)) & (rows < _frac(ny, 0.9)) & (cols >= _frac(nx, 0.42)) & (cols < _frac(nx, 0.58))
        for region, z in ((body, 0.0), (entrance, step), (upper, 2 * step), (roof, 3 * step)):
            refl[region] = 0.9
            depth[region] = z
        windows = body & ~entrance & ((rows - _frac(ny, 0.45)) % 4 == 2) & (cols % 3 != 0)
        refl[windows] = 0.4
    elif kind == "landscape":
        step = axial_bin_depth(cfg)

        def disk(ci, cj, rad):
            return (rows - ny * ci) ** 2 + (cols - nx * cj) ** 2 <= (rad * min(nx, ny)) ** 2

        house = (rows >= _frac(ny, 0.55)) & (rows < _frac(ny, 0.85)) & (cols >= _frac(nx, 0.38)) & (cols < _frac(nx, 0.62))
        roof = (rows < _frac(ny, 0.55)) & (rows >= _frac(ny, 0.4)) & (
            np.abs(cols - nx * 0.5) <= (rows - ny * 0.4) * (0.12 * nx) / (0.15 * ny)
        )
        objects = (
            (disk(0.45, 0.17, 0.12), 0.0, 0.8),
            (house | roof, 5 * step, 0.7),
            (disk(0.35, 0.83, 0.1), 10 * step, 0.9),
            (disk(0.8, 0.82, 0.07), 15 * step, 0.6),
        )
        for region, z, r in objects:
            refl[region] = r
            depth[region] = z
    elif kind == "edge":
        r0, r1 = _frac(ny, 0.125), _frac(ny, 0.875)
        refl[r0:r1, _frac(nx, 0.25):nx // 2] = 1.0
        depth[r0:r1, _frac(nx, 0.25):nx // 2] = 0.0
    else:
        raise ConfigError(f"unknown scene kind {kind!r}; expected one of {SCENE_KINDS}")

    scene = Scene(refl, depth, np.isfinite(depth), grid, name=kind)
    validate_depths(scene, cfg)
    return scene
