"""Batch front end.

Commands
--------
sample-uniform   chains targeting the uniform law on a body
sample-gaussian  chains targeting N(0, sigma2 I) restricted to a body
cool             the full annealing pipeline (unit ball start to uniform)
verify           quick deterministic verification checks
bench            query-scaling matrix and kernel backend comparison

Options may come from a JSON config file (--config); explicit flags win.
Every replica draws from its own counter-based stream keyed by
(--seed, replica index), so outputs are bit-identical across reruns and
independent of --jobs.  Bodies whose declared inscribed radius is below 1
are rescaled automatically (coordinates divided by the inscribed radius);
emitted samples are mapped back to the original frame and the scale factor
is recorded in the report.

Exit codes: 0 success; 1 usage or configuration error; 2 a sampler declared
Failure under the abort policy (or a verification check failed).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bench
from .annealing import CoolingConfig, run_cooling
from .backend import active_backend
from .errors import ContractViolation
from .geometry import (
    BodySpec,
    load_body,
    rescale_to_unit_inscribed,
    sample_unit_ball,
)
from .quadrature import audit_schedule
from .rng import chain_stream
from .sampler import (
    ProxParams,
    TargetSpec,
    plan_gaussian,
    plan_uniform,
    run_prox,
)
from .annealing import build_schedule
from .verify import (
    GridDensity,
    boosting_check,
    divergence_estimates,
    random_metropolis_chain,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="proxanneal", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"proxanneal {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, body_required=True):
        sp.add_argument("--config", type=Path, help="JSON config file; flags win")
        sp.add_argument("--body", type=Path, required=False, help="body definition JSON")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        sp.add_argument("--replicas", type=int, default=None, help="independent chains (default 1)")
        sp.add_argument("--jobs", type=int, default=None, help="concurrent replicas (default 1)")
        sp.add_argument("--format", choices=("jsonl", "csv"), default=None, dest="fmt")
        sp.add_argument("--out", type=Path, default=None, help="samples output path")
        sp.add_argument("--report", type=Path, default=None, help="report output path")

    def planner(sp):
        sp.add_argument("--M", type=float, default=None, help="assumed warmness of the start")
        sp.add_argument("--eta", type=float, default=None, help="failure budget")
        sp.add_argument("--eps", type=float, default=None, help="target accuracy")
        sp.add_argument("--n", type=int, default=None, help="override: iteration count")
        sp.add_argument("--h", type=float, default=None, help="override: step variance")
        sp.add_argument("--N", type=int, default=None, help="override: rejection threshold")

    sp = sub.add_parser("sample-uniform", help="sample the uniform law on a body")
    common(sp)
    planner(sp)

    sp = sub.add_parser("sample-gaussian", help="sample a truncated Gaussian on a body")
    common(sp)
    planner(sp)
    sp.add_argument("--sigma2", type=float, default=None, help="Gaussian variance")

    sp = sub.add_parser("cool", help="annealing pipeline to an approximately uniform sample")
    common(sp)
    sp.add_argument("--C", type=float, default=None, help="well-roundedness constant")
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--retry", default=None,
                    help="'abort' (default) or 'retry-phase:K' for K per-phase retries")

    sp = sub.add_parser("verify", help="deterministic verification checks")
    common(sp)
    sp.add_argument("--C", type=float, default=None)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--eta", type=float, default=None)

    sp = sub.add_parser("bench", help="query-scaling matrix on scaled boxes")
    common(sp)
    sp.add_argument("--dims", default=None, help="comma list, default 2,4,8,16")
    sp.add_argument("--bench-seeds", type=int, default=None, help="seeds per dimension (default 5)")
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--half-width", type=float, default=None)
    sp.add_argument("--compare-backends", action="store_true", default=None)
    return p


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """Config-file values fill in flags left at None; flags win."""
    cfg = {}
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise _UsageError(f"cannot read config file: {exc}") from exc
        if not isinstance(cfg, dict):
            raise _UsageError("config file must hold a JSON object")
    merged = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in cfg and cfg[key] is not None:
            merged[key] = cfg[key]
        else:
            merged[key] = default
    return merged


def _load_body_arg(value) -> tuple[BodySpec, float]:
    if value is None:
        raise _UsageError("a --body file is required")
    try:
        text = Path(value).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read body file: {exc}") from exc
    try:
        body = load_body(text, allow_unnormalized=True)
    except (ContractViolation, ValueError, KeyError) as exc:
        raise _UsageError(f"invalid body file: {exc}") from exc
    scale = 1.0
    if body.inscribed_radius < 1.0:
        body, scale = rescale_to_unit_inscribed(body)
    return body, scale


def _point_line(x: np.ndarray, fmt: str) -> str:
    if fmt == "csv":
        return ",".join(repr(float(v)) for v in x)
    return json.dumps({"x": [float(v) for v in x]})


def _write_samples(path, points, fmt: str) -> None:
    if path is None:
        return
    lines = [_point_line(p, fmt) for p in points]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def _write_report(path, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _run_replicas(fn, replicas: int, jobs: int):
    if jobs <= 1:
        return [fn(i) for i in range(replicas)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(replicas)))


def _resolve_params(opts: dict, d: int, D: float, sigma2=None) -> ProxParams:
    overrides = {k: opts[k] for k in ("n", "h", "N") if opts.get(k) is not None}
    M = opts.get("M")
    eta = opts.get("eta")
    eps = opts.get("eps")
    if len(overrides) == 3:
        return ProxParams(
            h=float(overrides["h"]), N=int(overrides["N"]), n=int(overrides["n"]),
            M=float(M) if M is not None else 1.0,
            eta=float(eta) if eta is not None else 0.5,
            eps=float(eps) if eps is not None else 0.5,
        )
    if M is None or eta is None or eps is None:
        raise _UsageError(
            "planner inputs --M --eta --eps are required unless all of "
            "--n --h --N are given"
        )
    if sigma2 is None:
        params = plan_uniform(d, D, float(M), float(eta), float(eps))
    else:
        params = plan_gaussian(d, float(sigma2), D, float(M), float(eta), float(eps))
    if overrides:
        fields = params.to_dict()
        for k, v in overrides.items():
            fields[k] = type(fields[k])(v)
        params = ProxParams(**fields)
    return params


def _cmd_sample(args, gaussian: bool) -> int:
    defaults = dict(
        body=None, seed=0, replicas=1, jobs=1, fmt="jsonl", out=None, report=None,
        M=None, eta=None, eps=None, n=None, h=None, N=None,
    )
    if gaussian:
        defaults["sigma2"] = None
    opts = _merge(args, defaults)
    body, scale = _load_body_arg(opts["body"])
    d = body.dim
    sigma2 = None
    if gaussian:
        if opts["sigma2"] is None:
            raise _UsageError("sample-gaussian requires --sigma2")
        sigma2 = float(opts["sigma2"]) / (scale * scale)
        target = TargetSpec.truncated_gaussian(sigma2, body)
    else:
        target = TargetSpec.uniform(body)
    params = _resolve_params(opts, d, body.circumscribed_radius, sigma2)
    seed, replicas = int(opts["seed"]), int(opts["replicas"])
    if replicas < 1:
        raise _UsageError("--replicas must be positive")

    def one(i: int):
        rng = chain_stream(seed, i)
        init = sample_unit_ball(d, rng)
        return run_prox(target, params, init, rng)

    reports = _run_replicas(one, replicas, int(opts["jobs"]))
    points = [scale * r.final_point for r in reports if not r.failed]
    _write_samples(opts["out"], points, opts["fmt"])
    doc = {
        "command": "sample-gaussian" if gaussian else "sample-uniform",
        "version": __version__,
        "backend": active_backend(),
        "seed": seed,
        "replicas": replicas,
        "rescale_factor": scale,
        "params": params.to_dict(),
        "failures": int(sum(r.failed for r in reports)),
        "total_queries": int(sum(r.ledger.total_queries for r in reports)),
        "per_replica": [
            {
                "failed": r.failed,
                "failure_iteration": r.failure_iteration,
                "queries": r.ledger.total_queries,
                "final_point": None if r.failed else [float(v) for v in scale * r.final_point],
            }
            for r in reports
        ],
    }
    if gaussian:
        doc["sigma2"] = float(opts["sigma2"])
    _write_report(opts["report"], doc)
    return 2 if doc["failures"] else 0


def _parse_retry(value) -> int:
    if value is None or value == "abort":
        return 0
    if isinstance(value, int):
        return value
    if value.startswith("retry-phase:"):
        try:
            k = int(value.split(":", 1)[1])
        except ValueError as exc:
            raise _UsageError(f"bad retry policy {value!r}") from exc
        if k < 0:
            raise _UsageError("retry count cannot be negative")
        return k
    raise _UsageError(f"bad retry policy {value!r}; use 'abort' or 'retry-phase:K'")


def _cmd_cool(args) -> int:
    defaults = dict(
        body=None, seed=0, replicas=1, jobs=1, fmt="jsonl", out=None, report=None,
        C=None, eps=None, eta=None, retry=None,
    )
    opts = _merge(args, defaults)
    body, scale = _load_body_arg(opts["body"])
    for key in ("C", "eps", "eta"):
        if opts[key] is None:
            raise _UsageError(f"cool requires --{key}")
    config = CoolingConfig(C=float(opts["C"]), eps=float(opts["eps"]), eta=float(opts["eta"]))
    retry = _parse_retry(opts["retry"])
    seed, replicas = int(opts["seed"]), int(opts["replicas"])
    if replicas < 1:
        raise _UsageError("--replicas must be positive")

    def one(i: int):
        rng = chain_stream(seed, i)
        return run_cooling(body, body.dim, config, rng,
                           retry_phase=retry, record_trials=False)

    reports = _run_replicas(one, replicas, int(opts["jobs"]))
    points = [scale * r.final_point for r in reports if not r.failed]
    _write_samples(opts["out"], points, opts["fmt"])
    failures = int(sum(r.failed for r in reports))
    finals = np.array([p for p in points]) if points else np.zeros((0, body.dim))
    doc = {
        "command": "cool",
        "version": __version__,
        "backend": active_backend(),
        "seed": seed,
        "replicas": replicas,
        "rescale_factor": scale,
        "retry_policy": "abort" if retry == 0 else f"retry-phase:{retry}",
        "C": config.C,
        "eps": config.eps,
        "eta": config.eta,
        "failures": failures,
        "total_queries": int(sum(r.total_queries for r in reports)),
        "schedule": reports[0].schedule.to_dict(),
        # declared-roundedness diagnostic: mean |X|^2 / d of the emitted samples
        "mean_sq_norm_over_d": None
        if finals.size == 0
        else float(np.mean(np.sum(finals**2, axis=1)) / body.dim),
        "per_replica": [
            {
                "failed": r.failed,
                "failed_phase": r.failed_phase,
                "total_queries": r.total_queries,
                "final_point": None if r.failed else [float(v) for v in scale * r.final_point],
                "phases": [
                    {
                        "phase": p.label,
                        "sigma2": p.sigma2,
                        "n": p.params.n,
                        "h": p.params.h,
                        "threshold": p.params.N,
                        "queries": p.run.ledger.total_queries,
                        "seconds": p.seconds,
                        "retries": p.retries,
                    }
                    for p in r.per_phase
                ],
            }
            for r in reports
        ],
    }
    _write_report(opts["report"], doc)
    return 2 if failures else 0


def _cmd_verify(args) -> int:
    defaults = dict(
        body=None, seed=0, replicas=1, jobs=1, fmt="jsonl", out=None, report=None,
        C=None, eps=None, eta=None,
    )
    opts = _merge(args, defaults)
    seed = int(opts["seed"])
    rng = chain_stream(seed, 0)
    checks = []

    holds = True
    worst = 0.0
    for _ in range(20):
        chain = random_metropolis_chain(int(rng.integers(2, 15)), rng)
        mu0 = rng.random(chain.states) + 0.01
        mu0 /= mu0.sum()
        for n in (1, 3, 10):
            res = boosting_check(chain, mu0, n)
            holds &= res["holds"]
            worst = max(worst, res["lhs"] - res["rhs"])
    checks.append(
        {"name": "sup-norm contraction vs worst-start TV", "passed": bool(holds),
         "worst_violation": worst}
    )

    ok = True
    for _ in range(20):
        edges = [np.linspace(-1, 1, 9)]
        a = rng.random(8) + 0.01
        b = rng.random(8) + 0.01
        mu = GridDensity(edges, a / a.sum())
        pi = GridDensity(edges, b / b.sum())
        try:
            divergence_estimates(mu, pi)
        except AssertionError:
            ok = False
    checks.append({"name": "divergence hierarchy on random grids", "passed": bool(ok)})

    if opts["body"] is not None and opts["C"] is not None:
        body, _scale = _load_body_arg(opts["body"])
        eps = float(opts["eps"]) if opts["eps"] is not None else 0.5
        eta = float(opts["eta"]) if opts["eta"] is not None else 0.1
        config = CoolingConfig(C=float(opts["C"]), eps=eps, eta=eta)
        schedule = build_schedule(body.dim, config, body)
        audit = audit_schedule(body, schedule)
        bound = math.sqrt(math.e) + 1e-6
        checks.append(
            {
                "name": "schedule warmness ledger",
                "passed": bool(
                    audit.step_bound_ok()
                    and audit.phase1_ratio <= audit.phase1_bound
                    and audit.truncation_fraction >= 1 - eps / 3
                ),
                "phase1_ratio": audit.phase1_ratio,
                "phase1_bound": audit.phase1_bound,
                "max_step_ratio": max(r for *_x, r in audit.step_ratios),
                "step_bound": bound,
                "phase4_ratio": audit.phase4_ratio,
                "truncation_fraction": audit.truncation_fraction,
            }
        )

    passed = all(c["passed"] for c in checks)
    _write_report(opts["report"], {
        "command": "verify",
        "version": __version__,
        "seed": seed,
        "passed": passed,
        "checks": checks,
    })
    return 0 if passed else 2


def _cmd_bench(args) -> int:
    defaults = dict(
        body=None, seed=0, replicas=1, jobs=1, fmt="jsonl", out=None, report=None,
        dims=None, bench_seeds=5, eps=0.5, eta=0.1, half_width=2.0,
        compare_backends=False,
    )
    opts = _merge(args, defaults)
    dims = bench.DEFAULT_DIMS
    if opts["dims"]:
        try:
            dims = tuple(int(v) for v in str(opts["dims"]).split(","))
        except ValueError as exc:
            raise _UsageError(f"bad --dims: {exc}") from exc

    def progress(row):
        print(
            f"d={row.d:3d} seed={row.seed} queries={row.total_queries:>12d} "
            f"seconds={row.seconds:9.2f} failed={row.failed}",
            flush=True,
        )

    rows = bench.run_matrix(
        dims=dims,
        seeds_per_dim=int(opts["bench_seeds"]),
        eps=float(opts["eps"]),
        eta=float(opts["eta"]),
        half_width=float(opts["half_width"]),
        master_seed=int(opts["seed"]),
        progress=progress,
    )
    fit = bench.fit_rows(rows)
    print(f"fitted query exponent: {fit['slope']:.3f} (r2={fit['r2']:.4f})")
    doc = {
        "command": "bench",
        "version": __version__,
        "backend": active_backend(),
        "dims": list(dims),
        "rows": [r.to_dict() for r in rows],
        "fit": fit,
    }
    if opts["compare_backends"]:
        cmp = bench.compare_backends()
        doc["backend_comparison"] = cmp
        print("backend comparison:", json.dumps(cmp, sort_keys=True))
    _write_report(opts["report"], doc)
    if opts["out"] is not None:
        lines = ["d,seed,total_queries,seconds,failed"]
        lines += [
            f"{r.d},{r.seed},{r.total_queries},{r.seconds!r},{int(r.failed)}"
            for r in rows
        ]
        Path(opts["out"]).write_text("\n".join(lines) + "\n")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "sample-uniform":
            return _cmd_sample(args, gaussian=False)
        if args.command == "sample-gaussian":
            return _cmd_sample(args, gaussian=True)
        if args.command == "cool":
            return _cmd_cool(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "bench":
            return _cmd_bench(args)
        raise _UsageError(f"unknown command {args.command}")
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
