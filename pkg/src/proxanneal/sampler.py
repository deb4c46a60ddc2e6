"""Proximal sampling kernels for uniform and truncated-Gaussian targets.

One iteration is a forward Gaussian move ``y ~ N(x, h I)`` followed by a
backward move that rejection-samples the conditional of the target given y:

* uniform target: proposals ``N(y, h I)`` accepted when inside the body;
* truncated Gaussian N(0, sigma2 I) restricted to the body: proposals
  ``N(y / (1 + h/sigma2), (h / (1 + h/sigma2)) I)`` accepted when inside.

A backward step that exhausts its trial threshold N declares Failure, which
is a value (it aborts the run and is surfaced in the :class:`RunReport`),
never an exception.  Conditioned on no failure having occurred, the law of
the iterates is exactly the kernel's law, so retry policies belong to the
caller, not in here.

The planners resolve (h, N, n) from (d, D[, sigma2], M, eta, eps):

* uniform: ``n = ceil(c_n d^2 D^2 log(M (d + D^2/h) / (eta eps))^2)`` and
  ``h = 1 / (2 d^2 log(9 n M / eta))``, coupled through a two-pass fixed
  point; ``N = ceil(Z log(Z)^4)`` with ``Z = 9 n M / eta``.
* truncated Gaussian: ``n = ceil(c_g max(d, d^2 sigma2) log(M D /
  (eta eps))^2)``, ``h = sigma2 min(1/d, 1/(d^2 sigma2 - 1)) / log Z``
  (guarded near ``d^2 sigma2 = 1``), same N.

All logarithms are natural and clamped below at e, so every log factor is
at least 1.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import ContractViolation
from .geometry import BodySpec, QueryLedger, as_vector, compile_body, contains

log = logging.getLogger(__name__)

__all__ = [
    "TargetSpec",
    "TuningConstants",
    "ProxParams",
    "ChainState",
    "RunReport",
    "forward_step",
    "backward_step_uniform",
    "backward_step_gaussian",
    "advance",
    "run_prox",
    "run_final_points",
    "plan_uniform",
    "plan_gaussian",
]

UNIFORM = "uniform"
TRUNCATED_GAUSSIAN = "truncated-gaussian"

# Runs longer than this keep only aggregate trial counts by default.
AUTO_RECORD_LIMIT = 5_000_000


@dataclass(frozen=True)
class TargetSpec:
    """What the chain targets: uniform on the body, or N(0, sigma2 I) on it."""

    kind: str
    body: BodySpec
    sigma2: Optional[float] = None

    def __post_init__(self):
        if self.kind == UNIFORM:
            if self.sigma2 is not None:
                raise ContractViolation("uniform target takes no sigma2")
        elif self.kind == TRUNCATED_GAUSSIAN:
            if self.sigma2 is None or not (
                math.isfinite(self.sigma2) and self.sigma2 > 0
            ):
                raise ContractViolation("truncated Gaussian needs finite sigma2 > 0")
        else:
            raise ContractViolation(f"unknown target kind {self.kind!r}")

    @staticmethod
    def uniform(body: BodySpec) -> "TargetSpec":
        return TargetSpec(UNIFORM, body)

    @staticmethod
    def truncated_gaussian(sigma2: float, body: BodySpec) -> "TargetSpec":
        return TargetSpec(TRUNCATED_GAUSSIAN, body, float(sigma2))


@dataclass(frozen=True)
class TuningConstants:
    """Explicit values for every constant the planner formulas leave hidden.

    ``c_uniform`` / ``c_gaussian`` scale the iteration counts; the threshold
    exponent is the 4 in ``N = Z log(Z)^4``; ``threshold_cap`` bounds N (the
    planner value can be astronomically conservative at tiny eta, and the cap
    is recorded on the resulting parameter bundle); ``gaussian_h_variant``
    selects the default ``1/log Z`` step factor or the alternative
    ``log log Z / log Z``; ``phase1_warmness_factor`` is the gamma in the
    annealing driver's assumed M = gamma sqrt(d) for its first stage.
    """

    c_uniform: float = 1.0
    c_gaussian: float = 1.0
    threshold_exponent: int = 4
    threshold_cap: int = 10**9
    gaussian_h_variant: str = "standard"  # or "loglog"
    phase1_warmness_factor: float = 3.0


@dataclass(frozen=True)
class ProxParams:
    """Fully resolved run parameters."""

    h: float
    N: int
    n: int
    M: float
    eta: float
    eps: float
    N_clamped: bool = False

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ContractViolation("step variance h must be finite and positive")
        if self.N < 1 or self.n < 0 or self.M < 1:
            raise ContractViolation("need N >= 1, n >= 0, M >= 1")
        if not (0 < self.eta < 1):
            raise ContractViolation("eta must lie in (0, 1)")
        if not (self.eps > 0):
            raise ContractViolation("eps must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ChainState:
    """Live state of a chain: the current feasible iterate and its index."""

    x: np.ndarray
    iteration: int = 0


@dataclass
class RunReport:
    """Audited outcome of one chain run."""

    final_point: Optional[np.ndarray]
    failed: bool
    failure_iteration: Optional[int]
    ledger: QueryLedger
    params_used: ProxParams
    target_kind: str = UNIFORM
    trials_recorded: bool = True

    def to_dict(self) -> dict:
        trials = self.ledger.per_iteration_trials
        return {
            "target_kind": self.target_kind,
            "failed": self.failed,
            "failure_iteration": self.failure_iteration,
            "final_point": None
            if self.final_point is None
            else [float(v) for v in self.final_point],
            "params": self.params_used.to_dict(),
            "ledger": {
                "total_queries": self.ledger.total_queries,
                "failures": self.ledger.failures,
                "trials_recorded": self.trials_recorded,
                "per_iteration_trials": [int(t) for t in trials]
                if self.trials_recorded
                else [],
            },
        }


# ---------------------------------------------------------------------------
# single steps


def _gaussian_proposal(h: float, sigma2: float) -> tuple[float, float]:
    shrink = 1.0 / (1.0 + h / sigma2)
    return shrink, h * shrink


def forward_step(x, h: float, rng: np.random.Generator) -> np.ndarray:
    """One forward move: ``x + sqrt(h) * z`` with z standard normal."""
    if not (h > 0):
        raise ContractViolation("h must be positive")
    v = as_vector(x)
    step = math.sqrt(h)
    out = v.copy()
    for j in range(v.size):
        out[j] += step * rng.standard_normal()
    return out


def _backward(y, mean_factor, prop_var, N, body, rng, ledger):
    v = as_vector(y, body.dim)
    if N < 1:
        raise ContractViolation("threshold N must be at least 1")
    prog = compile_body(body)
    out = np.empty(body.dim)
    t = kernels.active().backward(
        rng, v, mean_factor, math.sqrt(prop_var), N,
        prog.kinds, prog.bounds, prog.params, out,
    )
    if ledger is not None:
        ledger.record_iteration(abs(int(t)))
        if t < 0:
            ledger.record_failure()
    return out if t > 0 else None


def backward_step_uniform(y, h, N, body, rng, ledger=None):
    """Rejection-sample ``N(y, h I)`` restricted to the body.

    Returns the accepted point, or ``None`` after N rejected trials
    (Failure).  Every trial charges one membership query to the ledger.
    """
    if not (h > 0):
        raise ContractViolation("h must be positive")
    return _backward(y, 1.0, h, N, body, rng, ledger)


def backward_step_gaussian(y, h, sigma2, N, body, rng, ledger=None):
    """Rejection-sample the Gaussian-target conditional given y.

    The proposal is ``N(y / (1 + h/sigma2), (h / (1 + h/sigma2)) I)``; query
    and Failure semantics match :func:`backward_step_uniform`.
    """
    if not (h > 0 and sigma2 > 0):
        raise ContractViolation("h and sigma2 must be positive")
    mean_factor, prop_var = _gaussian_proposal(h, sigma2)
    return _backward(y, mean_factor, prop_var, N, body, rng, ledger)


# ---------------------------------------------------------------------------
# chain runs


def _target_proposal(target: TargetSpec, h: float) -> tuple[float, float]:
    if target.kind == UNIFORM:
        return 1.0, h
    return _gaussian_proposal(h, target.sigma2)


def advance(
    target: TargetSpec,
    params: ProxParams,
    state: ChainState,
    rng: np.random.Generator,
    ledger: QueryLedger | None = None,
) -> Optional[ChainState]:
    """One forward/backward iteration at step level; None on Failure.

    Slower than :func:`run_prox` (one kernel call per iteration) but exposes
    every iterate, which the feasibility property tests rely on.
    """
    y = forward_step(state.x, params.h, rng)
    mean_factor, prop_var = _target_proposal(target, params.h)
    out = _backward(y, mean_factor, prop_var, params.N, target.body, rng, ledger)
    if out is None:
        return None
    return ChainState(x=out, iteration=state.iteration + 1)


def run_prox(
    target: TargetSpec,
    params: ProxParams,
    init,
    rng: np.random.Generator,
    record_trials: Optional[bool] = None,
) -> RunReport:
    """Run the chain for ``params.n`` iterations from ``init``.

    ``init`` must lie in the body (checked without charging the ledger).
    The run stops at the first backward Failure.  ``record_trials=None``
    keeps the per-iteration trial counts unless the run is too long to
    store them; the query total is exact either way.
    """
    body = target.body
    x = as_vector(init, body.dim).copy()
    if not contains(body, x, ledger=None):
        raise ContractViolation("initial point lies outside the body")
    if record_trials is None:
        record_trials = params.n <= AUTO_RECORD_LIMIT

    mean_factor, prop_var = _target_proposal(target, params.h)
    prog = compile_body(body)
    trials = np.zeros(params.n if record_trials else 0, dtype=np.int64)
    fail_iter, total = kernels.active().chain(
        rng, x, params.h, mean_factor, prop_var, params.n, params.N,
        prog.kinds, prog.bounds, prog.params, trials, record_trials,
    )

    ledger = QueryLedger()
    failed = fail_iter >= 0
    if record_trials:
        done = fail_iter + 1 if failed else params.n
        ledger.record_iterations(trials[:done])
    else:
        ledger.record_query(int(total))
    if failed:
        ledger.record_failure()
    return RunReport(
        final_point=None if failed else x,
        failed=failed,
        failure_iteration=int(fail_iter) if failed else None,
        ledger=ledger,
        params_used=params,
        target_kind=target.kind,
        trials_recorded=record_trials,
    )


def run_final_points(
    target: TargetSpec,
    params: ProxParams,
    inits: np.ndarray,
    master_seed: int,
    first_chain_id: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run many independent chains, keeping only their endpoints.

    ``inits`` is an (m, d) array of feasible starting points; chain ``i``
    draws from the stream ``(master_seed, first_chain_id + i)``.  Returns
    ``(points, failed, queries)``; rows of failed chains are NaN.
    """
    from .rng import chain_stream

    body = target.body
    inits = np.asarray(inits, dtype=np.float64)
    m = inits.shape[0]
    mean_factor, prop_var = _target_proposal(target, params.h)
    prog = compile_body(body)
    kern = kernels.active()
    points = np.full((m, body.dim), np.nan)
    failed = np.zeros(m, dtype=bool)
    queries = np.zeros(m, dtype=np.int64)
    no_trials = np.zeros(0, dtype=np.int64)
    for i in range(m):
        x = inits[i].copy()
        stream = chain_stream(master_seed, first_chain_id + i)
        fail_iter, total = kern.chain(
            stream, x, params.h, mean_factor, prop_var, params.n, params.N,
            prog.kinds, prog.bounds, prog.params, no_trials, False,
        )
        queries[i] = total
        if fail_iter >= 0:
            failed[i] = True
        else:
            points[i] = x
    return points, failed, queries


# ---------------------------------------------------------------------------
# planners

_E = math.e


def _logc(x: float) -> float:
    """Natural log with the argument clamped below at e (so logs >= 1)."""
    return math.log(max(x, _E))


def _check_plan_inputs(d, D, M, eta, eps):
    if d < 1 or int(d) != d:
        raise ContractViolation("d must be a positive integer")
    if D < 1:
        raise ContractViolation("D must be at least 1")
    if M < 1:
        raise ContractViolation("M must be at least 1")
    if not (0 < eta < 1) or not (0 < eps < 1):
        raise ContractViolation("eta and eps must lie in (0, 1)")


def _threshold(n: int, M: float, eta: float, tuning: TuningConstants) -> tuple[int, bool]:
    Z = 9.0 * n * M / eta
    N = math.ceil(Z * _logc(Z) ** tuning.threshold_exponent)
    if N > tuning.threshold_cap:
        log.warning(
            "rejection threshold %.3g exceeds the cap %d; clamping "
            "(recorded on the parameter bundle)", float(N), tuning.threshold_cap,
        )
        return tuning.threshold_cap, True
    return int(N), False


def plan_uniform(
    d: int, D: float, M: float, eta: float, eps: float,
    tuning: TuningConstants = TuningConstants(),
) -> ProxParams:
    """Resolve run parameters for a uniform target on a body inside B_D(0).

    n and h determine each other through logarithms, so the planner runs a
    two-pass fixed point: a provisional h seeds n, and each pass recomputes
    n from h and then h from n.  After the second pass the pair satisfies
    ``h * 2 d^2 * log(9 n M / eta) = 1`` exactly, and further passes change
    nothing at double precision.
    """
    _check_plan_inputs(d, D, M, eta, eps)
    c_n = tuning.c_uniform
    h = 1.0 / (2.0 * d * d * _logc(9.0 * M / eta))
    n = 1
    for _ in range(2):
        n = math.ceil(c_n * d * d * D * D * _logc(M * (d + D * D / h) / (eta * eps)) ** 2)
        h = 1.0 / (2.0 * d * d * _logc(9.0 * n * M / eta))
    N, clamped = _threshold(n, M, eta, tuning)
    return ProxParams(h=h, N=N, n=int(n), M=M, eta=eta, eps=eps, N_clamped=clamped)


def _gaussian_h(d: int, sigma2: float, n: int, M: float, eta: float,
                tuning: TuningConstants) -> float:
    Z = 9.0 * n * M / eta  # always >= 9, so log Z >= 2.19 and log log Z > 0
    if tuning.gaussian_h_variant == "standard":
        factor = 1.0 / _logc(Z)
        knee = 1.0
    elif tuning.gaussian_h_variant == "loglog":
        lz = _logc(Z)
        factor = math.log(lz) / lz
        knee = math.log(lz) / (2.0 * lz)
    else:
        raise ContractViolation(
            f"unknown gaussian_h_variant {tuning.gaussian_h_variant!r}"
        )
    dd = d * d * sigma2
    if dd <= knee + 1e-6:
        branch = 1.0 / d
    else:
        branch = min(1.0 / d, 1.0 / (dd - knee))
    return sigma2 * factor * branch


def plan_gaussian(
    d: int, sigma2: float, D: float, M: float, eta: float, eps: float,
    tuning: TuningConstants = TuningConstants(),
) -> ProxParams:
    """Resolve run parameters for the target N(0, sigma2 I) on the body.

    ``n = ceil(c_g max(d, d^2 sigma2) log(M D / (eta eps))^2)`` does not
    involve h, so the two-pass fixed point settles immediately; the step
    variance is ``sigma2 min(1/d, 1/(d^2 sigma2 - 1)) / log(9 n M / eta)``
    with the 1/d branch forced when ``d^2 sigma2`` is within 1e-6 of the
    knee (no division by zero).
    """
    _check_plan_inputs(d, D, M, eta, eps)
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise ContractViolation("sigma2 must be finite and positive")
    c_g = tuning.c_gaussian
    n = 1
    h = _gaussian_h(d, sigma2, n, M, eta, tuning)
    for _ in range(2):
        n = math.ceil(c_g * max(d, d * d * sigma2) * _logc(M * D / (eta * eps)) ** 2)
        h = _gaussian_h(d, sigma2, n, M, eta, tuning)
    N, clamped = _threshold(n, M, eta, tuning)
    return ProxParams(h=h, N=N, n=int(n), M=M, eta=eta, eps=eps, N_clamped=clamped)
