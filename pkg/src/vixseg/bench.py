"""Complexity benchmark: the recurrent mixer against softmax attention.

For each sequence length the harness records the median forward wall time
(warmup excluded; runs shorter than the timer can resolve cleanly are
batched into inner loops until one sample covers a few milliseconds), the
analytic FLOP count and the mixer's state footprint, then fits
least-squares slopes on log(time) and log(FLOPs) versus log(N).  Timing
runs sequentially on one worker.
"""

from __future__ import annotations

import contextlib
import csv
import math
import time
from dataclasses import dataclass

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - always present in the dev env
    def threadpool_limits(limits):
        return contextlib.nullcontext()

from .attention import (
    attention_flops,
    attention_params,
    attention_state_bytes,
    softmax_attention_reference,
)
from .errors import ConfigError
from .rng import derive_rng
from .tensor import Tensor, no_grad
from .vil import init_vil_block, mlstm_scan, mlstm_scan_flops, mlstm_state_nbytes

DEFAULT_SIZES = (64, 128, 256, 512, 1024)
MIN_SAMPLE_SECONDS = 5e-3


@dataclass
class BenchRow:
    mixer: str
    n: int
    median_time: float
    flops: int
    state_bytes: int


@dataclass
class BenchReport:
    rows: list[BenchRow]
    time_slopes: dict[str, float]
    flop_slopes: dict[str, float]


def _fit_slope(ns, values) -> float:
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    x = x - x.mean()
    return float((x * (y - y.mean())).sum() / (x * x).sum())


def _time_callable(fn, repeats: int) -> float:
    fn()  # warmup, excluded
    inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        elapsed = time.perf_counter() - t0
        if elapsed >= MIN_SAMPLE_SECONDS or inner >= 4096:
            break
        inner *= 2
    samples = [elapsed / inner]
    for _ in range(repeats - 1):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return float(np.median(samples))


def run_bench(
    sizes=DEFAULT_SIZES,
    embed_dim: int = 8,
    heads: int = 4,
    repeats: int = 5,
    seed: int = 0,
) -> BenchReport:
    # BLAS thread dispatch is shape-dependent and noisy; timings are only
    # comparable across N when everything runs on one worker
    with threadpool_limits(limits=1):
        return _run_bench(sizes, embed_dim, heads, repeats, seed)


def _run_bench(sizes, embed_dim, heads, repeats, seed) -> BenchReport:
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 4:
        raise ConfigError("slope fitting needs at least 4 sequence lengths")
    rng = derive_rng(seed, "bench")
    d2 = 2 * embed_dim
    blk = init_vil_block(
        embed_dim, heads, 0, rng,
        lambda shape, fan_in, r: r.normal(0, 1.0 / math.sqrt(fan_in), size=shape),
    )
    att = attention_params(embed_dim, rng)
    rows = []
    for n in sizes:
        x_m = Tensor(rng.normal(size=(n, d2)).astype(np.float32))

        def run_mlstm():
            with no_grad():
                mlstm_scan(x_m, blk, "forward")

        rows.append(
            BenchRow(
                "mlstm",
                n,
                _time_callable(run_mlstm, repeats),
                mlstm_scan_flops(n, embed_dim, heads),
                mlstm_state_nbytes(embed_dim, heads),
            )
        )
    for n in sizes:
        x_a = rng.normal(size=(n, embed_dim)).astype(np.float32)

        def run_att():
            softmax_attention_reference(x_a, att)

        rows.append(
            BenchRow(
                "attention",
                n,
                _time_callable(run_att, repeats),
                attention_flops(n, embed_dim),
                attention_state_bytes(n, embed_dim),
            )
        )
    time_slopes = {}
    flop_slopes = {}
    for mixer in ("mlstm", "attention"):
        sub = [r for r in rows if r.mixer == mixer]
        ns = [r.n for r in sub]
        time_slopes[mixer] = _fit_slope(ns, [r.median_time for r in sub])
        flop_slopes[mixer] = _fit_slope(ns, [r.flops for r in sub])
    return BenchReport(rows, time_slopes, flop_slopes)


ROWS_CSV_HEADER = ["mixer", "n", "median_time_s", "flops", "state_bytes"]
SLOPES_CSV_HEADER = ["mixer", "time_slope", "flop_slope"]


def write_bench_csv(rows_path, slopes_path, report: BenchReport) -> None:
    with open(rows_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROWS_CSV_HEADER)
        for r in report.rows:
            w.writerow([r.mixer, r.n, repr(r.median_time), r.flops, r.state_bytes])
    with open(slopes_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SLOPES_CSV_HEADER)
        for mixer in ("mlstm", "attention"):
            w.writerow(
                [mixer, repr(report.time_slopes[mixer]), repr(report.flop_slopes[mixer])]
            )
