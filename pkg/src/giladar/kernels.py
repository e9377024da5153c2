"""Hot inner loops: echo rendering and correlation accumulation.

Every kernel exists twice, a numba-compiled loop and a vectorised numpy
version. The module-level names (``render_traces``, ``accumulate_products``)
point at whichever path ``_backend`` selected. Both paths compute the same
quantity; they agree to rounding, not bit for bit.
"""

from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit


@njit(cache=True, nogil=True)
def _render_traces_nb(frames, pixels, refl, group, start, coef, n_samples):
    n_meas = frames.shape[0]
    n_groups, support = coef.shape
    out = np.zeros((n_meas, n_samples))
    gw = np.empty(n_groups)
    for k in range(n_meas):
        gw[:] = 0.0
        for i in range(pixels.size):
            gw[group[i]] += refl[i] * np.float64(frames[k, pixels[i]])
        for g in range(n_groups):
            w = gw[g]
            j0 = start[g]
            for l in range(support):
                out[k, j0 + l] += w * coef[g, l]
    return out


def _render_traces_np(frames, pixels, refl, group, start, coef, n_samples):
    n_groups, support = coef.shape
    gather = np.zeros((frames.shape[1], n_groups))
    gather[pixels, group] = refl
    response = np.zeros((n_groups, n_samples))
    cols = start[:, None] + np.arange(support)[None, :]
    response[np.arange(n_groups)[:, None], cols] = coef
    return (np.asarray(frames, dtype=np.float64) @ gather) @ response


@njit(cache=True, nogil=True)
def _accumulate_products_nb(sum_bi, b, img):
    n_meas, n_slices = b.shape
    n_pix = img.shape[1]
    k = 0
    # four measurements per sweep over sum_bi to cut its memory traffic
    while k + 4 <= n_meas:
        for s in range(n_slices):
            b0 = np.float64(b[k, s])
            b1 = np.float64(b[k + 1, s])
            b2 = np.float64(b[k + 2, s])
            b3 = np.float64(b[k + 3, s])
            for p in range(n_pix):
                sum_bi[s, p] += (b0 * img[k, p] + b1 * img[k + 1, p]) + (b2 * img[k + 2, p] + b3 * img[k + 3, p])
        k += 4
    while k < n_meas:
        for s in range(n_slices):
            bs = np.float64(b[k, s])
            for p in range(n_pix):
                sum_bi[s, p] += bs * img[k, p]
        k += 1


def _accumulate_products_np(sum_bi, b, img):
    sum_bi += np.asarray(b, dtype=np.float64).T @ np.asarray(img, dtype=np.float64)


def render_traces_numpy(frames, pixels, refl, group, start, coef, n_samples):
    """Noiseless traces for a batch of measurements.

    ``frames`` is ``(K, ny * nx)``. Lit pixel ``pixels[i]`` has reflectivity
    ``refl[i]`` and echo group ``group[i]``; group ``g``'s echo occupies
    samples ``start[g] : start[g] + coef.shape[1]`` with amplitudes
    ``coef[g]``. Pixels at the same depth share a group, so the weights are
    summed per group before the pulse is spread over samples.
    """
    return _render_traces_np(frames, pixels, refl, group, start, coef, n_samples)


def render_traces_numba(frames, pixels, refl, group, start, coef, n_samples):
    return _render_traces_nb(
        np.ascontiguousarray(frames),
        np.ascontiguousarray(pixels, dtype=np.int64),
        np.ascontiguousarray(refl, dtype=np.float64),
        np.ascontiguousarray(group, dtype=np.int64),
        np.ascontiguousarray(start, dtype=np.int64),
        np.ascontiguousarray(coef, dtype=np.float64),
        int(n_samples),
    )


def accumulate_products_numpy(sum_bi, b, img):
    """In place: ``sum_bi[s, p] += sum_k b[k, s] * img[k, p]``."""
    _accumulate_products_np(sum_bi, b, img)


def accumulate_products_numba(sum_bi, b, img):
    _accumulate_products_nb(sum_bi, np.ascontiguousarray(b), np.ascontiguousarray(img))


if USE_NUMBA:
    render_traces = render_traces_numba
    accumulate_products = accumulate_products_numba
else:
    render_traces = render_traces_numpy
    accumulate_products = accumulate_products_numpy
