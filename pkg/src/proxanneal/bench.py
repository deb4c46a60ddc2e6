"""Query-scaling benchmark and kernel backend comparison.

``run_matrix`` executes the cooling pipeline over a dimension ladder of
scaled boxes with fixed seeds and reports one row per run (dimension, seed,
membership queries, wall time, failure flag).  Fitting log queries against
log dimension on those rows gives the empirical query exponent.

``compare_backends`` times one fixed chain workload under the numba and the
pure-numpy kernel sets and confirms they produce bit-identical output.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .annealing import CoolingConfig, run_cooling
from .geometry import compile_body, cube
from .rng import chain_stream
from .sampler import TuningConstants, plan_uniform
from .verify import query_scaling_fit

__all__ = ["BenchRow", "run_matrix", "fit_rows", "compare_backends"]

DEFAULT_DIMS = (2, 4, 8, 16)


@dataclass
class BenchRow:
    d: int
    seed: int
    total_queries: int
    seconds: float
    failed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def run_matrix(
    dims=DEFAULT_DIMS,
    seeds_per_dim: int = 5,
    eps: float = 0.5,
    eta: float = 0.1,
    half_width: float = 2.0,
    master_seed: int = 0,
    tuning: TuningConstants = TuningConstants(),
    progress=None,
) -> list[BenchRow]:
    """Cooling runs on the boxes ``[-half_width, half_width]^d``.

    The well-roundedness constant comes from the box's analytic second
    moment, ``E|X|^2 = d half_width^2 / 3``.  Run ``(d, seed)`` draws from
    the stream ``(master_seed, 10^6 d + seed)`` so rows are reproducible
    individually.
    """
    C = max(1.0, half_width / math.sqrt(3.0))
    config = CoolingConfig(C=C, eps=eps, eta=eta, tuning=tuning)
    rows: list[BenchRow] = []
    for d in dims:
        body = cube(d, half_width)
        for seed in range(seeds_per_dim):
            rng = chain_stream(master_seed, 10**6 * d + seed)
            t0 = time.perf_counter()
            report = run_cooling(body, d, config, rng, record_trials=False)
            dt = time.perf_counter() - t0
            rows.append(
                BenchRow(
                    d=d,
                    seed=seed,
                    total_queries=report.total_queries,
                    seconds=dt,
                    failed=report.failed,
                )
            )
            if progress is not None:
                progress(rows[-1])
    return rows


def fit_rows(rows: list[BenchRow]) -> dict:
    """Scaling fit over the successful rows of a benchmark matrix."""
    by_dim: dict[int, list[int]] = {}
    for row in rows:
        if not row.failed:
            by_dim.setdefault(row.d, []).append(row.total_queries)
    return query_scaling_fit(by_dim)


def compare_backends(
    d: int = 2,
    n_iters: int = 50_000,
    half_width: float = 2.0,
    master_seed: int = 123,
) -> dict:
    """Time one fixed uniform-target chain under both kernel backends.

    Returns per-backend wall times plus a bit-identity flag for the final
    state, the failure status and the query count.
    """
    body = cube(d, half_width)
    prog = compile_body(body)
    params = plan_uniform(d, body.circumscribed_radius, 2.0, 0.1, 0.5)
    results = {}
    outputs = {}
    for name in ("numba", "numpy"):
        try:
            kern = kernels.get_kernels(name)
        except Exception as exc:  # pragma: no cover - numba always present in CI
            results[name] = {"error": str(exc)}
            continue
        rng = chain_stream(master_seed, 0)
        x = np.zeros(d)
        no_trials = np.zeros(0, dtype=np.int64)
        # warm-up to exclude compilation from the timing
        kern.chain(
            chain_stream(master_seed, 1), x.copy(), params.h, 1.0, params.h,
            10, params.N, prog.kinds, prog.bounds, prog.params, no_trials, False,
        )
        t0 = time.perf_counter()
        fail_iter, total = kern.chain(
            rng, x, params.h, 1.0, params.h, n_iters, params.N,
            prog.kinds, prog.bounds, prog.params, no_trials, False,
        )
        dt = time.perf_counter() - t0
        outputs[name] = (x.copy(), int(fail_iter), int(total))
        results[name] = {
            "seconds": dt,
            "iters_per_second": n_iters / dt,
            "total_queries": int(total),
        }
    if "numba" in outputs and "numpy" in outputs:
        a, b = outputs["numba"], outputs["numpy"]
        results["bit_identical"] = bool(
            np.array_equal(a[0], b[0]) and a[1] == b[1] and a[2] == b[2]
        )
        if "seconds" in results["numba"] and "seconds" in results["numpy"]:
            results["speedup"] = results["numpy"]["seconds"] / results["numba"]["seconds"]
    results["workload"] = {"d": d, "n_iters": n_iters, "half_width": half_width}
    return results
