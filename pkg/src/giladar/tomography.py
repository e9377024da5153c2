"""Joining tomographic slices into a depth map and a point cloud."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, FormatError
from .geometry import OpticsConfig, depth_to_slice, slice_to_depth, target_footprint
from .pgm import write_pgm
from .reconstruction import SliceStack
from .scene import load_depth_csv, save_depth_csv


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Winner-take-all depth per pixel.

    ``slices`` holds the 1-based winning slice (0 where invalid), ``depth``
    the corresponding lattice depth (NaN where invalid) and ``confidence``
    the normalised correlation of the winning slice (float32).
    """

    depth: np.ndarray
    confidence: np.ndarray
    valid: np.ndarray
    slices: np.ndarray
    n_slices: int

    @property
    def shape(self):
        return self.depth.shape

    @property
    def count(self) -> int:
        return int(self.valid.sum())

    @classmethod
    def from_slices(cls, slices, confidence, cfg: OpticsConfig) -> "DepthMap":
        slices = np.asarray(slices, dtype=np.int64)
        valid = slices > 0
        depth = np.full(slices.shape, np.nan)
        if valid.any():
            depth[valid] = slice_to_depth(slices[valid], cfg)
        conf = np.where(valid, np.asarray(confidence, dtype=np.float32), np.float32(0))
        return cls(depth, conf.astype(np.float32), valid, np.where(valid, slices, 0), cfg.n_slices)


def assemble_3d(stack: SliceStack, cfg: OpticsConfig, threshold: float = 0.3) -> DepthMap:
    """Per pixel, pick the slice with the largest normalised correlation.

    Ties go to the nearer (smaller) slice. A pixel is valid when its winning
    value reaches ``threshold``.
    """
    if stack.normalization != "global_minmax":
        raise ContractError(
            f"assemble_3d needs a global_minmax-normalized stack, got {stack.normalization!r}"
        )
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold!r}")
    if stack.m != cfg.n_slices or stack.dG.shape[1:] != (cfg.grid_ny, cfg.grid_nx):
        raise DimensionError(
            f"stack is {stack.dG.shape} (m, ny, nx), config expects "
            f"{(cfg.n_slices, cfg.grid_ny, cfg.grid_nx)}"
        )
    dg = stack.dG
    best = np.argmax(dg, axis=0)
    conf = np.take_along_axis(dg, best[None], axis=0)[0]
    valid = conf >= threshold
    return DepthMap.from_slices(np.where(valid, best + 1, 0), conf, cfg)


def pixel_coordinates(shape, cfg: OpticsConfig) -> tuple[np.ndarray, np.ndarray]:
    """Target-plane ``(x, y)`` of pixel centers; x to the right, y up, origin at grid center."""
    ny, nx = shape
    pitch = target_footprint(cfg)
    rows, cols = np.mgrid[0:ny, 0:nx]
    return (cols - (nx - 1) / 2.0) * pitch, ((ny - 1) / 2.0 - rows) * pitch


def export_pointcloud(dm: DepthMap, cfg: OpticsConfig, path) -> Path:
    """ASCII PLY 1.0 with one ``x y z intensity`` vertex per valid pixel (row-major order)."""
    path = Path(path)
    x, y = pixel_coordinates(dm.shape, cfg)
    v = dm.valid
    verts = np.stack([x[v], y[v], dm.depth[v], dm.confidence[v]], axis=1).astype(np.float32)
    lines = [
        "ply",
        "format ascii 1.0",
        "comment giladar depth map",
        f"comment grid {dm.shape[1]} {dm.shape[0]}",
        f"element vertex {len(verts)}",
        "property float x",
        "property float y",
        "property float z",
        "property float intensity",
        "end_header",
    ]
    lines.extend(" ".join(f"{val:.9g}" for val in row) for row in verts.tolist())
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise FormatError(f"cannot write point cloud {path}: {exc}") from exc
    return path


def read_pointcloud(path) -> np.ndarray:
    """Vertices of an ASCII PLY written by :func:`export_pointcloud`, shape ``(n, 4)`` float32."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read point cloud {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: not a PLY file")
    count = None
    try:
        end = lines.index("end_header")
    except ValueError as exc:
        raise FormatError(f"{path}: missing end_header") from exc
    for line in lines[1:end]:
        parts = line.split()
        if parts[:1] == ["format"] and parts[1] != "ascii":
            raise FormatError(f"{path}: only ASCII PLY is supported")
        if parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
    if count is None:
        raise FormatError(f"{path}: no vertex element")
    body = lines[end + 1 : end + 1 + count]
    if len(body) != count:
        raise FormatError(f"{path}: expected {count} vertices, found {len(body)}")
    if count == 0:
        return np.zeros((0, 4), dtype=np.float32)
    return np.array([[float(t) for t in row.split()] for row in body], dtype=np.float32)


def depthmap_from_pointcloud(points: np.ndarray, cfg: OpticsConfig) -> DepthMap:
    """Rebuild a DepthMap on the config grid from exported vertices."""
    ny, nx = cfg.grid_ny, cfg.grid_nx
    pitch = target_footprint(cfg)
    slices = np.zeros((ny, nx), dtype=np.int64)
    conf = np.zeros((ny, nx), dtype=np.float32)
    if len(points):
        cols = np.rint(points[:, 0].astype(np.float64) / pitch + (nx - 1) / 2.0).astype(int)
        rows = np.rint((ny - 1) / 2.0 - points[:, 1].astype(np.float64) / pitch).astype(int)
        if cols.min() < 0 or cols.max() >= nx or rows.min() < 0 or rows.max() >= ny:
            raise FormatError("point cloud does not fit the configured grid")
        slices[rows, cols] = depth_to_slice(points[:, 2].astype(np.float64), cfg)
        conf[rows, cols] = points[:, 3]
    return DepthMap.from_slices(slices, conf, cfg)


def depth_histogram(dm: DepthMap) -> np.ndarray:
    """Valid-pixel count per slice; entry ``s - 1`` counts slice ``s``."""
    return np.bincount(dm.slices[dm.valid], minlength=dm.n_slices + 1)[1:]


def export_depth_csv(dm: DepthMap, path) -> None:
    save_depth_csv(path, dm.depth)


def import_depth_csv(path, cfg: OpticsConfig) -> DepthMap:
    depth = load_depth_csv(path)
    valid = np.isfinite(depth)
    slices = np.zeros(depth.shape, dtype=np.int64)
    slices[valid] = depth_to_slice(depth[valid], cfg)
    return DepthMap.from_slices(slices, np.where(valid, 1.0, 0.0), cfg)


def export_depth_pgm(dm: DepthMap, cfg: OpticsConfig, path) -> None:
    """16-bit PGM: invalid pixels are 0; valid depths map linearly from the
    slice-1 depth (gray 1) to the slice-m depth (gray 65535)."""
    img = np.zeros(dm.shape, dtype=np.int64)
    if dm.valid.any():
        if dm.n_slices > 1:
            frac = (dm.slices[dm.valid] - 1) / (dm.n_slices - 1)
        else:
            frac = np.ones(dm.count)
        img[dm.valid] = 1 + np.rint(frac * 65534).astype(np.int64)
    write_pgm(path, img, maxval=65535)
