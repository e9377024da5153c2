#!/usr/bin/env python3
"""Compare the numba and pure-numpy kernel paths.

Times the two hot kernels (trace rendering and product accumulation) on a
default-sized workload, checks that both paths agree, and optionally times a
whole campaign under each backend in a subprocess, since the backend is
chosen from GILADAR_DISABLE_NUMBA at import time.

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --campaign -N 4000
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from giladar import kernels
from giladar._backend import HAVE_NUMBA
from giladar.forward import EchoModel
from giladar.geometry import GridSpec, OpticsConfig
from giladar.scene import make_test_scene
from giladar.speckle import generate_intensities

CAMPAIGN = """
import time
from giladar._backend import backend_name
from giladar.forward import NoiseModel
from giladar.geometry import GridSpec, OpticsConfig
from giladar.pipeline import simulate_campaign
from giladar.scene import make_test_scene
cfg = OpticsConfig()
scene = make_test_scene("two_plane", GridSpec.from_config(cfg), cfg, dz=1.2)
simulate_campaign(scene, cfg, NoiseModel(), 512, 0)  # warm-up / JIT
t = time.perf_counter()
simulate_campaign(scene, cfg, NoiseModel(), {N}, 0)
print(backend_name(), time.perf_counter() - t)
"""


def workload(batch):
    cfg = OpticsConfig()
    grid = GridSpec.from_config(cfg)
    scene = make_test_scene("facade", grid, cfg)
    echo = EchoModel(scene, cfg)
    frames = generate_intensities(0, range(batch), grid, cfg.speckle_corr_len_target).reshape(batch, -1)
    inputs = (frames, echo.pixels, echo.reflectivity, echo.group, echo.start, echo.coef, cfg.n_samples)
    traces = kernels.render_traces_numpy(*inputs)
    b = traces.reshape(batch, cfg.n_slices, cfg.samples_per_slice).sum(axis=2).astype(np.float32)
    return echo, cfg, inputs, b, frames


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256, help="measurements per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--campaign", action="store_true", help="also time a full campaign per backend")
    ap.add_argument("-N", type=int, default=4000, help="campaign size for --campaign")
    args = ap.parse_args(argv)

    echo, cfg, inputs, b, img = workload(args.batch)
    m, npix = b.shape[1], img.shape[1]
    print(f"batch={args.batch} lit_pixels={echo.pixels.size} grid={cfg.grid_ny}x{cfg.grid_nx} "
          f"samples={cfg.n_samples} slices={m} numba={'yes' if HAVE_NUMBA else 'no'}")

    rows = []
    ref = kernels.render_traces_numpy(*inputs)
    t_np = best_of(lambda: kernels.render_traces_numpy(*inputs), args.repeat)
    if HAVE_NUMBA:
        got = kernels.render_traces_numba(*inputs)
        err = float(np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
        t_nb = best_of(lambda: kernels.render_traces_numba(*inputs), args.repeat)
        rows.append(("render_traces", t_np, t_nb, err))
    else:
        rows.append(("render_traces", t_np, float("nan"), float("nan")))

    def acc(fn):
        out = np.zeros((m, npix))
        fn(out, b, img)
        return out

    ref = acc(kernels.accumulate_products_numpy)
    t_np = best_of(lambda: acc(kernels.accumulate_products_numpy), args.repeat)
    if HAVE_NUMBA:
        err = float(np.max(np.abs(acc(kernels.accumulate_products_numba) - ref)) / np.max(np.abs(ref)))
        t_nb = best_of(lambda: acc(kernels.accumulate_products_numba), args.repeat)
        rows.append(("accumulate_products", t_np, t_nb, err))
    else:
        rows.append(("accumulate_products", t_np, float("nan"), float("nan")))

    print(f"{'kernel':<22}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'max rel diff':>14}")
    for name, a, c, e in rows:
        print(f"{name:<22}{a * 1e3:>10.2f}{c * 1e3:>10.2f}{a / c:>9.2f}{e:>14.2e}")

    if args.campaign:
        for flag in ("0", "1"):
            env = dict(os.environ, GILADAR_DISABLE_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", CAMPAIGN.format(N=args.N)], env=env,
                                 check=True, capture_output=True, text=True).stdout.split()
            print(f"campaign N={args.N}: backend={out[0]} {float(out[1]):.2f}s")


if __name__ == "__main__":
    main()
