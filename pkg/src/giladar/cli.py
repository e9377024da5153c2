"""Command-line entry point.

Exit codes: 0 success, 1 unexpected error, 2 configuration error, 3 I/O or
file-format error, 4 dimension mismatch, 5 insufficient data, 6 contract
violation, 7 measurement failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import yaml

from . import __version__
from ._backend import backend_name
from .errors import ConfigError, FormatError, GILadarError
from .forward import NoiseModel
from .geometry import GridSpec, OpticsConfig, load_config, save_config
from .metrics import evaluate
from .pipeline import default_workers, replay_record, simulate_campaign
from .presets import PRESETS
from .reconstruction import export_slices_pgm, normalize_slices, read_stack, write_stack
from .scene import SCENE_KINDS, load_scene, make_test_scene
from .tomography import (
    assemble_3d,
    depth_histogram,
    export_depth_csv,
    export_depth_pgm,
    export_pointcloud,
)


def _parse_value(raw: str):
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def build_config(args) -> OpticsConfig:
    """Preset, then config file, then ``--set`` overrides; later sources win."""
    values: dict = {}
    preset = PRESETS.get(getattr(args, "preset", None) or "default")
    if preset is None:
        raise ConfigError(f"unknown preset {args.preset!r}")
    values.update(preset["config"])
    if getattr(args, "config", None):
        values.update(load_config(args.config).to_dict())
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = _parse_value(raw.strip())
    return OpticsConfig.from_dict(values)


def build_noise(args) -> NoiseModel:
    return NoiseModel(
        photon_scale=args.photon_scale,
        background_rate=args.background,
        quantization_bits=args.bits,
        enable_shot_noise=not args.no_shot_noise,
        full_scale=args.full_scale,
    )


def build_scene(args, cfg: OpticsConfig):
    grid = GridSpec.from_config(cfg)
    if args.scene_files:
        refl, depth = args.scene_files
        scene = load_scene(refl, depth, grid)
        return scene, {"files": [_file_id(refl), _file_id(depth)]}
    params = dict(PRESETS[args.preset or "default"]["scene"])
    if args.scene:
        params = {"kind": args.scene}
    if args.dz is not None:
        params["dz"] = args.dz
    if args.steps is not None:
        params["n"] = args.steps
    kind = params.pop("kind")
    return make_test_scene(kind, grid, cfg, **params), {"kind": kind, **params}


def _file_id(path) -> dict:
    path = Path(path)
    try:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return {"path": str(path), "sha256": digest}


def _campaign_size(args) -> int:
    if args.N is not None:
        return args.N
    return PRESETS[args.preset or "default"]["N"]


def write_manifest(path, payload: dict) -> None:
    """Write JSON atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _manifest(command, cfg, args, started, scene_id=None, noise=None, N=None, outputs=()):
    return {
        "tool": "giladar",
        "version": __version__,
        "backend": backend_name(),
        "command": command,
        "config": cfg.to_dict() if cfg is not None else None,
        "noise": noise.to_dict() if noise is not None else None,
        "master_seed": getattr(args, "seed", None),
        "N": N,
        "scene": scene_id,
        "workers": getattr(args, "workers", None),
        "outputs": [_file_id(p) for p in outputs],
        "duration_s": round(time.perf_counter() - started, 3),
    }


def _progress(enabled: bool):
    if not enabled:
        return None

    def report(done, total):
        print(f"\r{done}/{total} measurements", end="" if done < total else "\n", file=sys.stderr)

    return report


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    cfg = build_config(args)
    noise = build_noise(args)
    scene, scene_id = build_scene(args, cfg)
    N = _campaign_size(args)
    out = Path(args.out)
    simulate_campaign(scene, cfg, noise, N, args.seed, workers=args.workers,
                      record_path=out, progress=_progress(args.progress))
    manifest = args.manifest or out.with_name(out.name + ".manifest.json")
    write_manifest(manifest, _manifest("simulate", cfg, args, started, scene_id, noise, N, [out]))
    return 0


def cmd_reconstruct(args) -> int:
    started = time.perf_counter()
    acc, header = replay_record(args.record)
    stack = acc.finalize()
    out = Path(args.out)
    write_stack(out, stack)
    pgm_dir = Path(args.pgm_dir) if args.pgm_dir else out.with_name(out.stem + "_slices")
    pgms = export_slices_pgm(stack, pgm_dir, args.normalization)
    if args.manifest:
        args.seed = header.master_seed
        write_manifest(args.manifest, _manifest("reconstruct", None, args, started, None, None, header.N, [out, *pgms]))
    return 0


def _assemble(stack, cfg, threshold, ply, depth_csv, depth_pgm):
    dm = assemble_3d(normalize_slices(stack, "global_minmax"), cfg, threshold)
    outputs = []
    if ply:
        outputs.append(export_pointcloud(dm, cfg, ply))
    if depth_csv:
        export_depth_csv(dm, depth_csv)
        outputs.append(Path(depth_csv))
    if depth_pgm:
        export_depth_pgm(dm, cfg, depth_pgm)
        outputs.append(Path(depth_pgm))
    return dm, outputs


def cmd_assemble(args) -> int:
    started = time.perf_counter()
    cfg = build_config(args)
    stack = read_stack(args.stack, cfg)
    dm, outputs = _assemble(stack, cfg, args.threshold, args.ply, args.depth_csv, args.depth_pgm)
    hist = depth_histogram(dm)
    print(" ".join(f"{s}:{c}" for s, c in enumerate(hist, start=1) if c))
    if args.manifest:
        write_manifest(args.manifest, _manifest("assemble", cfg, args, started, outputs=outputs))
    return 0


def cmd_pipeline(args) -> int:
    started = time.perf_counter()
    cfg = build_config(args)
    noise = build_noise(args)
    scene, scene_id = build_scene(args, cfg)
    N = _campaign_size(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    record = outdir / "record.bin" if args.keep_record else None
    acc = simulate_campaign(scene, cfg, noise, N, args.seed, workers=args.workers,
                            record_path=record, progress=_progress(args.progress))
    stack = acc.finalize(cfg)
    write_stack(outdir / "stack.bin", stack)
    pgms = export_slices_pgm(stack, outdir / "slices", args.normalization)
    dm, outputs = _assemble(stack, cfg, args.threshold, outdir / "cloud.ply",
                            outdir / "depth.csv", outdir / "depth.pgm")
    report = evaluate(stack, dm, scene, cfg)
    txt, js = report.write(outdir / "metrics")
    save_config(cfg, outdir / "config.yaml")
    files = [outdir / "stack.bin", *outputs, txt, js, outdir / "config.yaml", *pgms]
    if record is not None:
        files.insert(0, record)
    write_manifest(outdir / "manifest.json", _manifest("pipeline", cfg, args, started, scene_id, noise, N, files))
    print(report.to_text(), end="")
    return 0


def _add_config_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), help="named scenario (default: 'default')")
    p.add_argument("--config", help="key: value config file; overrides the preset")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")


def _add_campaign_args(p):
    _add_config_args(p)
    p.add_argument("--scene", choices=SCENE_KINDS, help="synthetic scene kind")
    p.add_argument("--dz", type=float, help="depth step (m) for two_plane / staircase")
    p.add_argument("--steps", type=int, help="number of staircase steps")
    p.add_argument("--scene-files", nargs=2, metavar=("REFLECTIVITY", "DEPTH_CSV"))
    p.add_argument("-N", type=int, help="number of measurements (default: preset's)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: $GILADAR_WORKERS or 1)")
    p.add_argument("--photon-scale", type=float, default=1000.0)
    p.add_argument("--background", type=float, default=0.0, help="background photons per sample")
    p.add_argument("--no-shot-noise", action="store_true")
    p.add_argument("--bits", type=int, default=None, help="digitizer bits (default: no quantisation)")
    p.add_argument("--full-scale", type=float, default=None, help="digitizer full scale")
    p.add_argument("--progress", action="store_true", help="print a progress line to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="giladar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"giladar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a campaign and write a measurement record")
    _add_campaign_args(p)
    p.add_argument("--out", required=True, help="measurement record path")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="correlate a recorded campaign into a slice stack")
    p.add_argument("record")
    p.add_argument("--out", required=True, help="slice-stack path")
    p.add_argument("--normalization", default="per_slice_minmax",
                   choices=("per_slice_minmax", "per_slice_zscore", "global_minmax"))
    p.add_argument("--pgm-dir", help="slice images directory (default: <out stem>_slices)")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("assemble", help="join a slice stack into a depth map and point cloud")
    p.add_argument("stack")
    _add_config_args(p)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--ply", help="point-cloud output")
    p.add_argument("--depth-csv", help="depth-map CSV output")
    p.add_argument("--depth-pgm", help="16-bit depth-map PGM output")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("pipeline", help="simulate, reconstruct, assemble and score in one run")
    _add_campaign_args(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--normalization", default="per_slice_minmax",
                   choices=("per_slice_minmax", "per_slice_zscore", "global_minmax"))
    p.add_argument("--keep-record", action="store_true", help="also write record.bin")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "workers", 0) is None:
            args.workers = default_workers()
        return args.func(args)
    except GILadarError as exc:
        print(f"giladar: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
