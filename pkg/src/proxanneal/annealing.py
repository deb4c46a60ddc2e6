"""Gaussian cooling: anneal from a unit-ball start to a uniform sample.

The driver first truncates the body to ``K_bar = K intersect B_{L sqrt(d)}``
with ``L = C log(3e / eps)`` (C from the well-roundedness declaration
``E||X||^2 <= C^2 d``; the truncation keeps at least a ``1 - eps/3`` volume
fraction).  It then walks a variance ladder of truncated Gaussians
N(0, sigma2 I) on the truncated body:

* Phase I    sigma2 = 1/d, started from a uniform unit-ball draw, which is
             gamma*sqrt(d)-warm for that first target;
* Phase II   sigma2 <- min(1, sigma2 (1 + 1/d));
* Phase III  sigma2 <- min(L^2 d, sigma2 (1 + sigma2 / (L^2 d)));
* Phase IV   uniform target on the truncated body.

Consecutive ladder entries are within a sqrt(e) density ratio of each other
everywhere on the truncated body, so running each stage to accuracy log 2
hands the next stage a 2*sqrt(e)-warm start.  The total failure budget eta
splits evenly over the realized number of stages (hat_eta), and Phase IV
runs at accuracy eps/3, leaving eps/3 headroom for the mass removed by the
truncation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .geometry import BodySpec, sample_unit_ball, truncate_to_ball
from .sampler import (
    ProxParams,
    RunReport,
    TargetSpec,
    TuningConstants,
    plan_gaussian,
    plan_uniform,
    run_prox,
)

__all__ = [
    "CoolingConfig",
    "CoolingSchedule",
    "PhaseRecord",
    "CoolingReport",
    "build_schedule",
    "run_cooling",
]

PHASE_I = "I"
PHASE_II = "II"
PHASE_III = "III"
PHASE_IV = "IV"

TWO_SQRT_E = 2.0 * math.sqrt(math.e)
LOG2 = math.log(2.0)


@dataclass(frozen=True)
class CoolingConfig:
    """Inputs of the annealing pipeline."""

    C: float
    eps: float
    eta: float
    tuning: TuningConstants = TuningConstants()

    def __post_init__(self):
        if self.C < 1:
            raise ContractViolation("well-roundedness constant C must be >= 1")
        if not (0 < self.eps < 1) or not (0 < self.eta < 1):
            raise ContractViolation("eps and eta must lie in (0, 1)")


@dataclass(frozen=True)
class CoolingSchedule:
    """The variance ladder plus the per-stage failure budget."""

    L: float
    sigma2_sequence: tuple[float, ...]
    phase_labels: tuple[str, ...]
    hat_eta: float
    truncated_body: Optional[BodySpec] = None

    @property
    def phase_counts(self) -> dict[str, int]:
        counts = {PHASE_I: 0, PHASE_II: 0, PHASE_III: 0}
        for lab in self.phase_labels:
            counts[lab] += 1
        return counts

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "hat_eta": self.hat_eta,
            "sigma2_sequence": list(self.sigma2_sequence),
            "phase_labels": list(self.phase_labels),
        }


@dataclass
class PhaseRecord:
    """One annealing stage: its label, target variance, run, and timing."""

    label: str
    sigma2: Optional[float]  # None for the final uniform stage
    params: ProxParams
    run: RunReport
    seconds: float
    retries: int = 0

    def to_dict(self) -> dict:
        out = self.run.to_dict()
        out.update(
            {
                "phase": self.label,
                "sigma2": self.sigma2,
                "seconds": self.seconds,
                "retries": self.retries,
            }
        )
        return out


@dataclass
class CoolingReport:
    """Audited outcome of a full annealing run."""

    per_phase: list[PhaseRecord]
    total_queries: int
    final_point: Optional[np.ndarray]
    failed: bool
    schedule: CoolingSchedule
    failed_phase: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "failed": self.failed,
            "failed_phase": self.failed_phase,
            "total_queries": self.total_queries,
            "final_point": None
            if self.final_point is None
            else [float(v) for v in self.final_point],
            "schedule": self.schedule.to_dict(),
            "per_phase": [p.to_dict() for p in self.per_phase],
        }


def build_schedule(
    d: int, config: CoolingConfig, body: Optional[BodySpec] = None
) -> CoolingSchedule:
    """Construct the variance ladder for dimension *d*.

    Starts at 1/d, multiplies by (1 + 1/d) up to 1, then by
    (1 + sigma2 / (L^2 d)) up to L^2 d, both capped exactly at their phase
    boundary.  ``hat_eta`` divides the failure budget by the realized stage
    count (the two extra stages are the first Gaussian stage and the final
    uniform one).  When *body* is given it is truncated to B_{L sqrt(d)} and
    attached for the driver.
    """
    if d < 1:
        raise ContractViolation("dimension must be at least 1")
    L = config.C * math.log(3.0 * math.e / config.eps)
    top = L * L * d
    sigma2 = 1.0 / d
    seq = [sigma2]
    labels = [PHASE_I]
    while sigma2 < 1.0:
        sigma2 = min(1.0, sigma2 * (1.0 + 1.0 / d))
        seq.append(sigma2)
        labels.append(PHASE_II)
    while sigma2 < top:
        sigma2 = min(top, sigma2 * (1.0 + sigma2 / top))
        seq.append(sigma2)
        labels.append(PHASE_III)
    n_ii = labels.count(PHASE_II)
    n_iii = labels.count(PHASE_III)
    hat_eta = config.eta / (2 + n_ii + n_iii)
    truncated = None
    if body is not None:
        truncated = truncate_to_ball(body, L * math.sqrt(d))
    return CoolingSchedule(
        L=L,
        sigma2_sequence=tuple(seq),
        phase_labels=tuple(labels),
        hat_eta=hat_eta,
        truncated_body=truncated,
    )


def _phase_params(
    d: int, label: str, sigma2: float, schedule: CoolingSchedule,
    config: CoolingConfig, d_plan_gauss: float,
) -> ProxParams:
    if label == PHASE_I:
        M = config.tuning.phase1_warmness_factor * math.sqrt(d)
    else:
        M = TWO_SQRT_E
    return plan_gaussian(
        d, sigma2, d_plan_gauss, max(M, 1.0), schedule.hat_eta, LOG2, config.tuning
    )


def run_cooling(
    body: BodySpec,
    d: int,
    config: CoolingConfig,
    rng: np.random.Generator,
    retry_phase: int = 0,
    record_trials: Optional[bool] = None,
) -> CoolingReport:
    """Run the full annealing pipeline on *body*.

    The caller asserts well-roundedness with constant ``config.C``; the body
    must contain the unit ball (``r_in >= 1``) so the initial unit-ball draw
    is feasible.  ``retry_phase = 0`` aborts on the first stage Failure
    (keeping the conditional-on-success law exact); ``retry_phase = k`` re-runs
    a failed stage up to k times from the previous stage's output, with fresh
    randomness, and records the retries.
    """
    if body.dim != d:
        raise ContractViolation("body dimension does not match d")
    if body.inscribed_radius < 1:
        raise ContractViolation("body must contain the unit ball (rescale first)")
    if retry_phase < 0:
        raise ContractViolation("retry count cannot be negative")

    schedule = build_schedule(d, config, body)
    kbar = schedule.truncated_body
    # Planner D for the Gaussian stages: diameter bound of the truncated body.
    d_gauss = max(2.0 * kbar.circumscribed_radius, 1.0)
    d_unif = max(2.0 * schedule.L * math.sqrt(d), 1.0)

    per_phase: list[PhaseRecord] = []
    x = sample_unit_ball(d, rng)

    def _run_stage(target, params, x_init, label, sigma2):
        t0 = time.perf_counter()
        rep = run_prox(target, params, x_init, rng, record_trials=record_trials)
        retries = 0
        while rep.failed and retries < retry_phase:
            retries += 1
            rep = run_prox(target, params, x_init, rng, record_trials=record_trials)
        per_phase.append(
            PhaseRecord(
                label=label,
                sigma2=sigma2,
                params=params,
                run=rep,
                seconds=time.perf_counter() - t0,
                retries=retries,
            )
        )
        return rep

    for sigma2, label in zip(schedule.sigma2_sequence, schedule.phase_labels):
        params = _phase_params(d, label, sigma2, schedule, config, d_gauss)
        target = TargetSpec.truncated_gaussian(sigma2, kbar)
        rep = _run_stage(target, params, x, label, sigma2)
        if rep.failed:
            return _failed_report(per_phase, schedule)
        x = rep.final_point

    params = plan_uniform(
        d, d_unif, TWO_SQRT_E, schedule.hat_eta, config.eps / 3.0, config.tuning
    )
    rep = _run_stage(TargetSpec.uniform(kbar), params, x, PHASE_IV, None)
    if rep.failed:
        return _failed_report(per_phase, schedule)

    total = sum(p.run.ledger.total_queries for p in per_phase)
    return CoolingReport(
        per_phase=per_phase,
        total_queries=total,
        final_point=rep.final_point,
        failed=False,
        schedule=schedule,
    )


def _failed_report(per_phase: list[PhaseRecord], schedule: CoolingSchedule) -> CoolingReport:
    total = sum(p.run.ledger.total_queries for p in per_phase)
    return CoolingReport(
        per_phase=per_phase,
        total_queries=total,
        final_point=None,
        failed=True,
        schedule=schedule,
        failed_phase=len(per_phase) - 1,
    )
