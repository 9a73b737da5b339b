"""Timing benchmark of the similarity measures as the matrix size grows."""
from __future__ import annotations

import dataclasses
import time

import numpy as np
from threadpoolctl import threadpool_limits

from .metrics import airm, euclid_dist, lerm, logdet_div
from .parameterization import Kind, parameterize
from .descriptor import CovarianceDescriptor

__all__ = ["BenchRecord", "random_spd", "bench_metrics", "fit_slopes", "BENCH_METRICS"]

BENCH_METRICS = ("euclid", "airm", "lerm", "logdet")
MIN_REPS = 30
# each timed sample should span at least this many timer ticks
MIN_SAMPLE_NS = 1_000_000


@dataclasses.dataclass
class BenchRecord:
    metric: str
    d: int
    reps: int
    median_ns: float
    mad_ns: float
    inner: int = 1


def random_spd(d: int, rng) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return A @ A.T / d + np.eye(d)


def _callable_for(metric, d, rng):
    X = random_spd(d, rng)
    Y = random_spd(d, rng)
    if metric == "euclid":
        # parameterization is an offline per-descriptor cost; only the distance is timed
        a = parameterize(CovarianceDescriptor(X, np.zeros(d), 2), Kind.SPHERE, fuse=False)
        b = parameterize(CovarianceDescriptor(Y, np.zeros(d), 2), Kind.SPHERE, fuse=False)
        return lambda: euclid_dist(a, b)
    fn = {"airm": airm, "lerm": lerm, "logdet": logdet_div}[metric]
    return lambda: fn(X, Y)


def _calibrate(call) -> int:
    call()  # warm-up, discarded
    inner = 1
    while True:
        t0 = time.perf_counter_ns()
        for _ in range(inner):
            call()
        if time.perf_counter_ns() - t0 >= MIN_SAMPLE_NS:
            return inner
        inner *= 2


def bench_metrics(d_list=(16, 32, 64, 128, 256), reps: int = MIN_REPS, seed: int = 0,
                  metrics=BENCH_METRICS):
    """Median per-call time of each metric at each size, single-threaded.

    Samples are taken round-robin over the sizes so that a transient slowdown
    of the machine is spread over all of them. Returns ``(records, slopes)``
    where ``slopes[metric]`` is the least-squares slope of log(time) against
    log(d) over the upper half of ``d_list``.
    """
    d_list = [int(d) for d in d_list]
    if d_list != sorted(d_list) or len(d_list) < 4 or d_list[-1] < 8 * d_list[0]:
        raise ValueError("d_list must be ascending, >= 4 values spanning >= 8x")
    if reps < MIN_REPS:
        raise ValueError(f"reps must be at least {MIN_REPS}")
    records = []
    with threadpool_limits(limits=1):
        for metric in metrics:
            rng = np.random.default_rng(seed)
            calls = [_callable_for(metric, d, rng) for d in d_list]
            inner = [_calibrate(c) for c in calls]
            samples = np.empty((len(d_list), reps))
            for i in range(reps):
                for j, call in enumerate(calls):
                    t0 = time.perf_counter_ns()
                    for _ in range(inner[j]):
                        call()
                    samples[j, i] = (time.perf_counter_ns() - t0) / inner[j]
            for j, d in enumerate(d_list):
                med = float(np.median(samples[j]))
                mad = float(np.median(np.abs(samples[j] - med)))
                records.append(BenchRecord(metric, d, reps, med, mad, inner[j]))
    return records, fit_slopes(records, d_list)


def fit_slopes(records, d_list) -> dict:
    upper = sorted(d_list)[len(d_list) // 2:]
    slopes = {}
    for metric in dict.fromkeys(r.metric for r in records):
        pts = [(r.d, r.median_ns) for r in records if r.metric == metric and r.d in upper]
        x = np.log([p[0] for p in pts])
        y = np.log([p[1] for p in pts])
        slopes[metric] = float(np.polyfit(x, y, 1)[0])
    return slopes
