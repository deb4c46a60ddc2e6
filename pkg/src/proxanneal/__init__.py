"""Approximately uniform sampling from convex bodies via membership oracles.

The package provides proximal sampling kernels for uniform and truncated
Gaussian targets on convex bodies, a Gaussian-cooling annealing driver that
turns a unit-ball start into an approximately uniform sample, and a
verification harness (grid oracles, exact chain checks, goodness-of-fit
suites, query-scaling regression).
"""

from .backend import active_backend
from .geometry import (
    BodySpec,
    QueryLedger,
    ball,
    box,
    contains,
    cube,
    dump_body,
    load_body,
    rescale_to_unit_inscribed,
    sample_unit_ball,
    truncate_to_ball,
)
from .rng import chain_stream
from .sampler import (
    ChainState,
    ProxParams,
    RunReport,
    TargetSpec,
    TuningConstants,
    advance,
    backward_step_gaussian,
    backward_step_uniform,
    forward_step,
    plan_gaussian,
    plan_uniform,
    run_prox,
)
from .annealing import CoolingConfig, CoolingReport, CoolingSchedule, build_schedule, run_cooling

__all__ = [
    "active_backend",
    "BodySpec",
    "QueryLedger",
    "ball",
    "box",
    "cube",
    "contains",
    "dump_body",
    "load_body",
    "rescale_to_unit_inscribed",
    "sample_unit_ball",
    "truncate_to_ball",
    "chain_stream",
    "ChainState",
    "ProxParams",
    "RunReport",
    "TargetSpec",
    "TuningConstants",
    "advance",
    "backward_step_gaussian",
    "backward_step_uniform",
    "forward_step",
    "plan_gaussian",
    "plan_uniform",
    "run_prox",
    "CoolingConfig",
    "CoolingReport",
    "CoolingSchedule",
    "build_schedule",
    "run_cooling",
]

__version__ = "0.1.0"
