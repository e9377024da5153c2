import math

import numpy as np
import pytest

from giladar.errors import ContractError, DimensionError, InsufficientDataError, MeasurementError
from giladar.forward import NoiseModel
from giladar.geometry import GridSpec, OpticsConfig, axial_bin_depth, target_footprint
from giladar.metrics import (
    METRIC_KEYS,
    MetricsReport,
    contrast_to_noise,
    depth_accuracy,
    evaluate,
    lateral_resolution,
    lit_recall,
)
from giladar.pipeline import simulate_campaign
from giladar.reconstruction import normalize_slices
from giladar.scene import make_test_scene
from giladar.tomography import DepthMap, assemble_3d

CFG = OpticsConfig(grid_nx=32, grid_ny=32)
GRID = GridSpec.from_config(CFG)


def truth_map(scene, cfg, shift=0):
    slices = np.where(scene.mask, scene.ground_truth_slices(cfg) + shift, 0)
    return DepthMap.from_slices(slices, np.ones(scene.grid.shape), cfg)


def test_perfect_recovery():
    scene = make_test_scene("staircase", GRID, CFG, dz=0.6, n=4)
    acc = depth_accuracy(truth_map(scene, CFG), scene, CFG)
    assert acc.rmse == 0.0 and acc.bin_accuracy == 1.0
    assert acc.n_compared == scene.mask.sum()
    assert lit_recall(truth_map(scene, CFG), scene, CFG) == 1.0


def test_off_by_one_bin():
    scene = make_test_scene("two_plane", GRID, CFG, dz=1.2)
    acc = depth_accuracy(truth_map(scene, CFG, shift=1), scene, CFG)
    assert acc.bin_accuracy == 0.0
    assert acc.rmse == pytest.approx(0.59958, abs=1e-5)
    assert acc.rmse == pytest.approx(axial_bin_depth(CFG), rel=1e-12)


def test_no_overlap_is_insufficient():
    scene = make_test_scene("two_plane", GRID, CFG)
    empty = DepthMap.from_slices(np.zeros(GRID.shape, int), np.zeros(GRID.shape), CFG)
    with pytest.raises(InsufficientDataError):
        depth_accuracy(empty, scene, CFG)
    small = OpticsConfig(grid_nx=8, grid_ny=8)
    with pytest.raises(DimensionError):
        depth_accuracy(truth_map(make_test_scene("two_plane", GridSpec.from_config(small), small), small), scene, CFG)


def test_cnr_definition(rng):
    img = rng.normal(size=(20, 20))
    fg = np.zeros((20, 20), bool)
    fg[:10] = True
    img[fg] += 3.0
    expected = (img[fg].mean() - img[~fg].mean()) / img[~fg].std()
    assert contrast_to_noise(img, fg, ~fg) == pytest.approx(expected, rel=1e-12)


def test_cnr_same_statistics_near_zero(rng):
    img = rng.normal(size=(200, 200))
    fg = np.zeros(img.shape, bool)
    fg[::2] = True
    assert abs(contrast_to_noise(img, fg, ~fg)) < 0.02


def test_cnr_errors():
    img = np.zeros((8, 8))
    fg = np.zeros((8, 8), bool)
    fg[:2] = True
    img[fg] = 1.0
    with pytest.raises(ValueError):
        contrast_to_noise(img, fg, ~fg)
    with pytest.raises(ContractError):
        contrast_to_noise(np.arange(64.0).reshape(8, 8), fg, np.ones((8, 8), bool))
    with pytest.raises(InsufficientDataError):
        contrast_to_noise(img, fg, np.zeros((8, 8), bool))


def gaussian_edge_image(scene, sigma):
    """Edge scene reflectivity blurred by a lattice Gaussian, by direct summation."""
    refl = scene.reflectivity
    ny, nx = refl.shape
    out = np.zeros_like(refl)
    for y in range(ny):
        for x in range(nx):
            acc = 0.0
            for xx in range(nx):
                acc += refl[y, xx] * math.exp(-0.5 * ((x - xx) / sigma) ** 2)
            out[y, x] = acc
    return out


@pytest.mark.parametrize("sigma", [1.5, 2.5])
def test_lateral_resolution_known_blur(sigma):
    cfg = OpticsConfig()
    scene = make_test_scene("edge", GridSpec.from_config(cfg), cfg)
    est = lateral_resolution(gaussian_edge_image(scene, sigma), scene, cfg)
    # 10-90 % width of a Gaussian edge response: 2 * 1.2816 sigma
    assert est == pytest.approx(2 * 1.2815515655446004 * sigma * target_footprint(cfg), rel=0.02)


def test_lateral_resolution_sampling_floor():
    cfg = OpticsConfig()
    scene = make_test_scene("edge", GridSpec.from_config(cfg), cfg)
    assert lateral_resolution(scene.reflectivity, scene, cfg) == target_footprint(cfg)
    tiny = cfg.replace(speckle_corr_len_target=0.18)
    stack = simulate_campaign(scene, tiny, NoiseModel.off(), 3000, 1).finalize(tiny)
    est = lateral_resolution(stack, scene, tiny)
    assert target_footprint(cfg) <= est < 0.3


def test_lateral_resolution_undetectable(rng):
    cfg = OpticsConfig()
    scene = make_test_scene("edge", GridSpec.from_config(cfg), cfg)
    with pytest.raises(MeasurementError):
        lateral_resolution(rng.normal(size=scene.grid.shape), scene, cfg)
    with pytest.raises(MeasurementError):
        lateral_resolution(np.ones(scene.grid.shape), scene, cfg)
    flat = make_test_scene("two_plane", GridSpec.from_config(cfg), cfg)
    with pytest.raises(DimensionError):
        lateral_resolution(np.ones((4, 4)), flat, cfg)


@pytest.mark.slow
def test_lateral_resolution_scales_with_corr_len():
    cfg = OpticsConfig()
    scene = make_test_scene("edge", GridSpec.from_config(cfg), cfg)
    est = []
    for corr in (0.25, 0.5):
        c = cfg.replace(speckle_corr_len_target=corr)
        est.append(lateral_resolution(simulate_campaign(scene, c, NoiseModel(), 10000, 3).finalize(c), scene, c))
    assert 1.6 <= est[1] / est[0] <= 2.4


def test_bin_accuracy_monotone_in_noise():
    scene = make_test_scene("two_plane", GRID, CFG, dz=1.2)
    accs = []
    for scale in (1000.0, 1.0, 0.1):
        stack = simulate_campaign(scene, CFG, NoiseModel(photon_scale=scale), 2000, 5).finalize(CFG)
        accs.append(depth_accuracy(assemble_3d(normalize_slices(stack), CFG, 0.3), scene, CFG).bin_accuracy)
    assert accs[0] >= accs[1] >= accs[2]
    assert accs[0] > accs[2]


def test_report_round_trip(tmp_path):
    rep = MetricsReport(0.1 + 0.2, 0.95, 1.0, 0.2625, float("nan"), 2, 10000)
    txt, js = rep.write(tmp_path / "metrics")
    keys = [line.split("=")[0] for line in txt.read_text().splitlines()]
    assert keys == list(METRIC_KEYS)
    back = MetricsReport.from_text(txt.read_text())
    assert back.depth_rmse == 0.1 + 0.2 and back.n_used == 10000 and math.isnan(back.cnr)
    assert js.read_text().startswith("{")


def test_evaluate_deterministic():
    scene = make_test_scene("two_plane", GRID, CFG, dz=1.2)
    stack = simulate_campaign(scene, CFG, NoiseModel(), 1000, 9).finalize(CFG)
    dm = assemble_3d(normalize_slices(stack), CFG, 0.3)
    a, b = evaluate(stack, dm, scene, CFG), evaluate(stack, dm, scene, CFG)
    assert a.to_text() == b.to_text()
    assert a.n_used == 1000 and a.occupied_bins == 2
    assert 0.0 <= a.depth_bin_accuracy <= 1.0 and a.cnr > 0
