import os
import subprocess
import sys

import numpy as np
import pytest

from giladar import _backend, kernels


@pytest.fixture
def echo_inputs(rng):
    n_total, n_groups, support, n_samples = 60, 5, 11, 64
    frames = rng.exponential(size=(7, n_total)).astype(np.float32)
    pixels = np.sort(rng.choice(n_total, size=40, replace=False))
    refl = rng.uniform(0.1, 1.0, size=40)
    refl[::7] = 0.0
    group = rng.integers(0, n_groups, size=40)
    start = rng.integers(0, n_samples - support, size=n_groups)
    coef = rng.uniform(size=(n_groups, support))
    return frames, pixels, refl, group, start, coef, n_samples


def reference_traces(frames, pixels, refl, group, start, coef, n_samples):
    """Each lit pixel's echo added separately."""
    out = np.zeros((len(frames), n_samples))
    for k in range(len(frames)):
        for i, p in enumerate(pixels):
            g = group[i]
            out[k, start[g] : start[g] + coef.shape[1]] += float(frames[k, p]) * refl[i] * coef[g]
    return out


@pytest.mark.parametrize("impl", [kernels.render_traces_numpy, kernels.render_traces_numba])
def test_render_traces(impl, echo_inputs):
    np.testing.assert_allclose(impl(*echo_inputs), reference_traces(*echo_inputs), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("impl", [kernels.accumulate_products_numpy, kernels.accumulate_products_numba])
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_accumulate_products(impl, dtype, rng):
    b = rng.uniform(size=(11, 3)).astype(dtype)
    b[2, 1] = 0.0
    img = rng.exponential(size=(11, 12)).astype(dtype)
    acc = np.full((3, 12), 0.5)
    impl(acc, b, img)
    expected = 0.5 + np.einsum("ks,kp->sp", b.astype(float), img.astype(float))
    np.testing.assert_allclose(acc, expected, rtol=1e-13)


def test_dispatch_follows_backend():
    if _backend.USE_NUMBA:
        assert kernels.accumulate_products is kernels.accumulate_products_numba
    else:
        assert kernels.accumulate_products is kernels.accumulate_products_numpy


def test_env_flag_selects_numpy_path():
    code = "from giladar import _backend, kernels; print(_backend.backend_name(), kernels.render_traces.__name__)"
    env = dict(os.environ, GILADAR_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "render_traces_numpy"]
