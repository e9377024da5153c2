"""Reconstruction quality against ground truth."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import curve_fit

from .errors import ContractError, DimensionError, InsufficientDataError, MeasurementError
from .geometry import OpticsConfig, slice_to_depth, target_footprint
from .reconstruction import SliceStack
from .scene import Scene
from .tomography import DepthMap, depth_histogram

# distance between the 10% and 90% points of a Gaussian edge, in sigmas
_ESF_10_90 = 2.0 * 1.2815515655446004

METRIC_KEYS = (
    "depth_rmse",
    "depth_bin_accuracy",
    "lit_recall",
    "lateral_res_estimate",
    "cnr",
    "occupied_bins",
    "n_used",
)


class DepthAccuracy(NamedTuple):
    rmse: float
    bin_accuracy: float
    n_compared: int


def depth_accuracy(dm: DepthMap, scene: Scene, cfg: OpticsConfig) -> DepthAccuracy:
    """Compare assigned bins with the scene's ground-truth bins.

    Both sides are placed on the slice lattice, so the RMSE is zero exactly
    when every compared bin matches.
    """
    if dm.shape != scene.grid.shape:
        raise DimensionError(f"depth map {dm.shape} and scene {scene.grid.shape} differ")
    both = dm.valid & scene.mask
    if not both.any():
        raise InsufficientDataError("no pixel is valid in both the depth map and the scene")
    truth = scene.ground_truth_slices(cfg)[both]
    got = dm.slices[both]
    err = slice_to_depth(got, cfg) - slice_to_depth(np.clip(truth, 1, cfg.n_slices), cfg)
    rmse = float(np.sqrt(np.mean(err**2)))
    return DepthAccuracy(rmse, float(np.mean(got == truth)), int(both.sum()))


def lit_recall(dm: DepthMap, scene: Scene, cfg: OpticsConfig) -> float:
    """Fraction of reflecting scene pixels that are valid *and* in the right bin."""
    lit = scene.mask & (scene.reflectivity > 0)
    if not lit.any():
        raise InsufficientDataError("scene has no reflecting pixels")
    truth = scene.ground_truth_slices(cfg)
    return float(np.mean(dm.valid[lit] & (dm.slices[lit] == truth[lit])))


def contrast_to_noise(image, fg_mask, bg_mask) -> float:
    """(mean_fg - mean_bg) / std_bg."""
    image = np.asarray(image, dtype=np.float64)
    fg = np.asarray(fg_mask, dtype=bool)
    bg = np.asarray(bg_mask, dtype=bool)
    if not fg.any() or not bg.any():
        raise InsufficientDataError("foreground and background masks must be non-empty")
    if (fg & bg).any():
        raise ContractError("foreground and background masks overlap")
    sd = image[bg].std()
    if not sd > 0:
        raise ContractError("background has zero variance; contrast-to-noise is undefined")
    return float((image[fg].mean() - image[bg].mean()) / sd)


def _find_edges(refl: np.ndarray):
    """Vertical reflectivity edges carried by the largest number of rows.

    Yields ``(col, rows, halfwidth, rising)``: the edge lies between columns
    ``col - 1`` and ``col``, ``rows`` carry it, ``halfwidth`` is how far a
    profile may extend before meeting another step, and ``rising`` tells
    whether reflectivity increases across it.
    """
    diff = np.diff(refl, axis=1)
    steps = diff != 0
    counts = steps.sum(axis=0)
    if counts.max() == 0:
        raise MeasurementError("scene has no vertical reflectivity edge")
    for c in np.flatnonzero(counts == counts.max()):
        col = int(c) + 1
        rows = np.flatnonzero(steps[:, c])
        # the rows at either end of an edge sit next to corners
        if len(rows) > 6:
            rows = rows[2:-2]
        others = np.flatnonzero(steps[rows].any(axis=0))
        others = others[others != c] + 1
        gap = int(np.min(np.abs(others - col))) if others.size else refl.shape[1]
        halfwidth = max(3, min(8, gap - 1))
        yield col, rows, halfwidth, bool(np.mean(diff[rows, c]) > 0)


def edge_profile(image, scene: Scene):
    """Row-averaged profile across the scene's dominant vertical edges.

    Profiles of all equally dominant edges are oriented so reflectivity
    rises with the offset and averaged over their common width. Returns
    ``(offsets, profile)``; offsets are pixel centers measured from the edge.
    """
    image = np.asarray(image, dtype=np.float64)
    nx = image.shape[1]
    edges = [e for e in _find_edges(scene.reflectivity) if e[0] - e[2] >= 0 and e[0] + e[2] <= nx]
    if not edges:
        raise MeasurementError("no edge lies far enough from the grid border")
    half = min(e[2] for e in edges)
    profiles = []
    for col, rows, _, rising in edges:
        prof = image[rows, col - half : col + half].mean(axis=0)
        profiles.append(prof if rising else prof[::-1])
    offsets = np.arange(-half, half) + 0.5
    return offsets, np.mean(profiles, axis=0)


def _lattice_esf(offsets, sigma, reach: int = 64):
    """Edge response sampled at pixel centers for a Gaussian point response of
    width ``sigma`` (pixels) sampled on the same lattice."""
    d = offsets[:, None] - (np.arange(reach) + 0.5)[None, :]
    total = 1.0 + 2.0 * np.exp(-0.5 * (np.arange(1, 2 * reach) / sigma) ** 2).sum()
    return np.exp(-0.5 * (d / sigma) ** 2).sum(axis=1) / total


def lateral_resolution(image, edge_scene: Scene, cfg: OpticsConfig) -> float:
    """10-90 % edge-spread width (m) across a straight reflectivity edge.

    ``image`` is a 2-D slice or a slice stack; a stack is summed over slices.
    The row-averaged edge profile is fitted with the response of a Gaussian
    point-spread function sampled on the pixel lattice, and the width of the
    corresponding continuous edge response is reported. It is never reported
    below one target pixel, the sampling floor.
    """
    if isinstance(image, SliceStack):
        image = image.dG
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image.sum(axis=0)
    if image.shape != edge_scene.grid.shape:
        raise DimensionError(f"image {image.shape} and scene {edge_scene.grid.shape} differ")
    x, prof = edge_profile(image, edge_scene)
    if not prof.max() > prof.min():
        raise MeasurementError("flat edge profile")

    def model(x, base, step, shift, sigma):
        return base + step * _lattice_esf(x - shift, sigma)

    p0 = (prof[0], prof[-1] - prof[0], 0.0, 1.0)
    try:
        popt, pcov = curve_fit(
            model, x, prof, p0=p0,
            bounds=([-np.inf, -np.inf, -1.0, 0.05], [np.inf, np.inf, 1.0, float(len(x))]),
        )
    except (RuntimeError, ValueError) as exc:
        raise MeasurementError(f"edge fit failed: {exc}") from exc
    step, step_err = popt[1], math.sqrt(max(pcov[1, 1], 0.0))
    if not (np.isfinite(step_err) and step > 3.0 * step_err):
        raise MeasurementError("edge not detectable above noise")
    pitch = target_footprint(cfg)
    return float(max(_ESF_10_90 * popt[3] * pitch, pitch))


@dataclass
class MetricsReport:
    depth_rmse: float
    depth_bin_accuracy: float
    lit_recall: float
    lateral_res_estimate: float
    cnr: float
    occupied_bins: int
    n_used: int

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False) + "\n"

    def write(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.txt`` (key=value) and ``<stem>.json``."""
        stem = Path(stem)
        txt, js = stem.with_suffix(".txt"), stem.with_suffix(".json")
        txt.write_text(self.to_text())
        js.write_text(self.to_json())
        return txt, js

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        values = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        kw = {}
        for key in METRIC_KEYS:
            raw = values[key]
            kw[key] = int(raw) if key in ("occupied_bins", "n_used") else float(raw)
        return cls(**kw)


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def dominant_bins(dm: DepthMap, fraction: float = 0.05) -> np.ndarray:
    """Slice indices (1-based) holding at least ``fraction`` of the valid pixels."""
    hist = depth_histogram(dm)
    if dm.count == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(hist >= max(1.0, fraction * dm.count)) + 1


def evaluate(stack: SliceStack, dm: DepthMap, scene: Scene, cfg: OpticsConfig) -> MetricsReport:
    """All metrics for one run. Metrics that cannot be measured on this scene are NaN."""
    try:
        acc = depth_accuracy(dm, scene, cfg)
        rmse, bins = acc.rmse, acc.bin_accuracy
    except InsufficientDataError:
        rmse = bins = float("nan")
    try:
        recall = lit_recall(dm, scene, cfg)
    except InsufficientDataError:
        recall = float("nan")
    try:
        lateral = lateral_resolution(stack, scene, cfg)
    except MeasurementError:
        lateral = float("nan")
    truth = scene.ground_truth_slices(cfg)
    lit = scene.mask & (scene.reflectivity > 0)
    cnr = float("nan")
    if lit.any() and (~scene.mask).any():
        s = int(np.bincount(truth[lit]).argmax())
        try:
            cnr = contrast_to_noise(stack.slice(s), lit & (truth == s), ~scene.mask)
        except ValueError:
            pass
    occupied = dominant_bins(dm).size
    return MetricsReport(rmse, bins, recall, lateral, cnr, occupied, stack.n_used)
