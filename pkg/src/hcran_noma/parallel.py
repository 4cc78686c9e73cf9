"""Data-parallel sweep contract: frozen snapshots, disjoint writes, and
bit-reproducible results for any worker count.

A sweep is a set of independent update tasks.  Every task reads only a frozen
snapshot of the solver state and writes its own cells of a fresh output
buffer, so running tasks serially, or on any number of threads, produces the
same bytes.  Reductions over task outputs go through a fixed pairwise tree
whose shape depends only on the element count, never on the worker count.

The power sweeps, multiplier updates and bound-coefficient refreshes of the
inner solver all fit this shape; the benchmark below times a representative
rate-update kernel over a configurable (M, N, K) grid.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np


class PlanError(ValueError):
    """Raised when a sweep plan would let two tasks write the same cell."""


@dataclass(frozen=True)
class SweepTask:
    """One independent update: write update_fn(snapshot, payload) to out[out_sel]."""

    out_sel: object   # any numpy index expression selecting this task's cells
    payload: object


@dataclass(frozen=True)
class SweepPlan:
    tasks: tuple[SweepTask, ...]
    snapshot: Mapping[str, np.ndarray]
    out_shape: tuple[int, ...]
    out_dtype: np.dtype = field(default_factory=lambda: np.dtype(np.float64))


def _freeze(arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    frozen = {}
    for name, arr in arrays.items():
        view = np.asarray(arr).view()
        view.flags.writeable = False
        frozen[name] = view
    return frozen


def build_plan(tasks: Sequence[SweepTask | tuple], snapshot: Mapping[str, np.ndarray],
               out_shape: tuple[int, ...], out_dtype=np.float64) -> SweepPlan:
    """Validate and freeze a sweep plan.

    Raises PlanError if any output cell is claimed by more than one task.
    Plain (out_sel, payload) tuples are accepted in place of SweepTask.
    """
    norm = tuple(t if isinstance(t, SweepTask) else SweepTask(*t) for t in tasks)
    claimed = np.zeros(out_shape, dtype=np.int32)
    marker = np.zeros(out_shape, dtype=bool)
    for t in norm:
        marker[...] = False
        marker[t.out_sel] = True
        claimed += marker
        if np.any(claimed > 1):
            raise PlanError(f"overlapping writes at {t.out_sel!r}")
    return SweepPlan(tasks=norm, snapshot=_freeze(snapshot),
                     out_shape=tuple(out_shape), out_dtype=np.dtype(out_dtype))


def parallel_sweep(plan: SweepPlan,
                   update_fn: Callable[[Mapping[str, np.ndarray], object], object],
                   workers: int = 1) -> np.ndarray:
    """Execute every task of the plan; identical output for any worker count.

    With workers == 1 the tasks run as a plain loop in task order.  With more
    workers the task list is split into contiguous stripes consumed by a
    thread pool; since writes are disjoint and each cell's value is produced
    by the same single call either way, the result is byte-identical.
    """
    out = np.zeros(plan.out_shape, dtype=plan.out_dtype)
    tasks = plan.tasks
    if not tasks:
        return out

    def run_span(lo: int, hi: int) -> None:
        for t in tasks[lo:hi]:
            out[t.out_sel] = update_fn(plan.snapshot, t.payload)

    if workers <= 1 or len(tasks) == 1:
        run_span(0, len(tasks))
        return out

    n = len(tasks)
    stripes = min(workers, n)
    bounds = [round(i * n / stripes) for i in range(stripes + 1)]
    with ThreadPoolExecutor(max_workers=stripes) as pool:
        futures = [pool.submit(run_span, bounds[i], bounds[i + 1])
                   for i in range(stripes)]
        for f in futures:
            f.result()
    return out


def tree_reduce(values: np.ndarray, op: Callable[[np.ndarray, np.ndarray], np.ndarray] = np.add) -> float:
    """Reduce a 1-D buffer through a fixed pairwise tree.

    The association order depends only on len(values), so partial results from
    any task partition combine identically: workers fill the buffer
    positionally and the reduction happens here, after the barrier.
    """
    buf = np.asarray(values).reshape(-1).copy()
    n = buf.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        buf[:half] = op(buf[:half], buf[n - half:n])
        n -= half
    return float(buf[0])


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    m: int
    n: int
    k: int
    workers: int
    serial_ms: float
    parallel_ms: float
    speedup: float
    max_divergence: float


@dataclass
class BenchReport:
    rows: list[BenchRow]

    def csv_lines(self) -> list[str]:
        lines = ["M,N,K,workers,serial_ms,parallel_ms,speedup,max_divergence"]
        for r in self.rows:
            lines.append(f"{r.m},{r.n},{r.k},{r.workers},{r.serial_ms:.3f},"
                         f"{r.parallel_ms:.3f},{r.speedup:.3f},{r.max_divergence:.3e}")
        return lines


_KERNEL_PASSES = 16  # inner repeats per task; keeps per-task work >> dispatch cost


def _rate_update_kernel(snapshot: Mapping[str, np.ndarray], payload) -> np.ndarray:
    """Representative per-row power-update work: interference, SINR, bound
    coefficients and the clipped closed-form update for a block of (m, k)
    rows.  Pure function of the snapshot."""
    rows = payload  # (row_lo, row_hi) over flattened (m, k)
    g = snapshot["gamma_rows"][rows[0]:rows[1]]
    s = snapshot["sigma_rows"][rows[0]:rows[1]]
    p = snapshot["p_rows"][rows[0]:rows[1]]
    floor = snapshot["interference_rows"][rows[0]:rows[1]]
    mask = snapshot["mask_rows"][rows[0]:rows[1]]
    acc = np.zeros_like(p)
    for _ in range(_KERNEL_PASSES):
        z = p * g / (s + floor)
        alpha = z / (1.0 + z)
        den = 1.0 + np.log1p(z) + alpha * floor / (s + floor)
        acc += np.clip(alpha / den, 0.0, mask)
    return acc / _KERNEL_PASSES


def build_rate_sweep_plan(m: int, n: int, k: int, seed: int = 0,
                          chunks: int = 4) -> SweepPlan:
    """Synthetic but representative sweep over an (M*K, N) state, split into a
    fixed number of row chunks (independent of worker count)."""
    rng = np.random.default_rng(seed)
    rows = m * k
    shape = (rows, n)
    snapshot = {
        "gamma_rows": rng.exponential(1.0, shape),
        "sigma_rows": np.full(shape, 1e-3),
        "p_rows": rng.uniform(0.0, 1.0, shape),
        "interference_rows": rng.uniform(0.0, 0.5, shape),
        "mask_rows": np.full(shape, 1.0),
    }
    n_chunks = min(chunks, rows)
    bounds = [round(i * rows / n_chunks) for i in range(n_chunks + 1)]
    tasks = [SweepTask(out_sel=np.s_[bounds[i]:bounds[i + 1], :],
                       payload=(bounds[i], bounds[i + 1]))
             for i in range(n_chunks) if bounds[i] < bounds[i + 1]]
    return build_plan(tasks, snapshot, shape)


def benchmark(cfg_grid: Sequence[tuple[int, int, int]], repetitions: int = 3,
              workers: int = 4, seed: int = 0) -> BenchReport:
    """Median serial vs parallel wall time of the rate-update sweep for each
    (M, N, K) grid point.  Divergence is the max absolute difference between
    the serial and parallel outputs (zero by construction)."""
    rows = []
    for m, n, k in cfg_grid:
        plan = build_rate_sweep_plan(m, n, k, seed=seed)
        parallel_sweep(plan, _rate_update_kernel, workers=1)  # warm caches
        serial_times, parallel_times = [], []
        ref = parallel_sweep(plan, _rate_update_kernel, workers=1)
        div = 0.0
        for _ in range(repetitions):
            t0 = time.perf_counter()
            out_s = parallel_sweep(plan, _rate_update_kernel, workers=1)
            serial_times.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            out_p = parallel_sweep(plan, _rate_update_kernel, workers=workers)
            parallel_times.append(time.perf_counter() - t0)
            div = max(div, float(np.max(np.abs(out_p - out_s))),
                      float(np.max(np.abs(out_s - ref))))
        ser = float(np.median(serial_times) * 1e3)
        par = float(np.median(parallel_times) * 1e3)
        rows.append(BenchRow(m=m, n=n, k=k, workers=workers, serial_ms=ser,
                             parallel_ms=par, speedup=ser / par,
                             max_divergence=div))
    return BenchReport(rows)
