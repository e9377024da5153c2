"""Chunked, optionally threaded campaign execution.

Measurements are processed in fixed blocks of ``BLOCK`` indices. Each block
gets its own accumulator and the block accumulators are merged in index
order, so the floating-point result does not depend on the worker count or
on whether the data came from a live simulation or a replayed record.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator

import numpy as np

from . import rng as _rng
from .errors import ConfigError, InsufficientDataError
from .forward import EchoModel, NoiseModel, RecordHeader, RecordWriter, iter_record, read_record_header, simulate_batch
from .geometry import OpticsConfig
from .reconstruction import CorrelationAccumulator
from .scene import Scene

BLOCK = 256
WORKERS_ENV = "GILADAR_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers


def _block_ranges(N: int) -> list[range]:
    return [range(lo, min(lo + BLOCK, N)) for lo in range(0, N, BLOCK)]


def accumulate_blocks(
    blocks: Iterable[tuple[int, np.ndarray, np.ndarray]],
    shape: tuple[int, int, int],
) -> CorrelationAccumulator:
    """Merge per-block accumulators in the order the blocks arrive."""
    total = CorrelationAccumulator(*shape)
    for first, frames, slices in blocks:
        part = CorrelationAccumulator(*shape).accumulate_batch(frames, slices, first_index=first)
        total = total.merge(part)
    return total


def simulate_blocks(
    scene: Scene,
    cfg: OpticsConfig,
    noise: NoiseModel,
    N: int,
    master_seed: int,
    workers: int = 1,
) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(first_index, frames, slices)`` blocks in index order."""
    if N < 2:
        raise InsufficientDataError(f"a campaign needs at least 2 measurements, got {N}")
    seed = _rng.check_seed(master_seed)
    echo = EchoModel(scene, cfg)

    def run(block: range):
        frames, slices = simulate_batch(echo, noise, seed, block)
        return block.start, frames, slices

    blocks = _block_ranges(N)
    if workers <= 1:
        for block in blocks:
            yield run(block)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # bounded look-ahead keeps memory flat for large N
        pending = []
        it = iter(blocks)
        for block in it:
            pending.append(pool.submit(run, block))
            if len(pending) >= 2 * workers:
                break
        for block in it:
            yield pending.pop(0).result()
            pending.append(pool.submit(run, block))
        for fut in pending:
            yield fut.result()


def simulate_campaign(
    scene: Scene,
    cfg: OpticsConfig,
    noise: NoiseModel,
    N: int,
    master_seed: int,
    workers: int = 1,
    record_path=None,
    progress: Callable[[int, int], None] | None = None,
) -> CorrelationAccumulator:
    """Simulate ``N`` measurements, optionally record them, and accumulate."""
    shape = (cfg.n_slices, cfg.grid_ny, cfg.grid_nx)
    blocks = simulate_blocks(scene, cfg, noise, N, master_seed, workers)
    writer = None
    if record_path is not None:
        writer = RecordWriter(record_path, RecordHeader(cfg.grid_nx, cfg.grid_ny, cfg.n_slices, N, int(master_seed)))

    def tap():
        for first, frames, slices in blocks:
            if writer is not None:
                writer.write(frames, slices)
            if progress is not None:
                progress(first + len(frames), N)
            yield first, frames, slices

    try:
        acc = accumulate_blocks(tap(), shape)
    except BaseException:
        if writer is not None:
            writer._fh.close()
        raise
    if writer is not None:
        writer.close()
    return acc


def replay_record(path) -> tuple[CorrelationAccumulator, RecordHeader]:
    header = read_record_header(path)
    if header.N < 2:
        raise InsufficientDataError(f"{path}: record holds {header.N} measurements, need at least 2")
    acc = accumulate_blocks(iter_record(path, batch=BLOCK), (header.m, header.ny, header.nx))
    return acc, header
