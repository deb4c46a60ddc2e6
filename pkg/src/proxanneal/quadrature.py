"""Deterministic integrals over bodies: no sampling involved.

Used to audit the annealing schedule: the warmness of each hand-off is a
ratio of truncated-Gaussian normalizing constants, so checking the ladder
reduces to computing ``Z(sigma2) = integral over K of exp(-|x|^2/(2 sigma2))``
and the body volume.

Boxes (product of 1-d integrals) and balls (radial incomplete gamma) are
handled in closed form in any dimension, as are intersections that reduce
to one of those.  Everything else is integrated numerically in d <= 2 by
slicing the body into vertical chords.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .annealing import CoolingSchedule
from .errors import ContractViolation
from .geometry import Ball, BodySpec, Box, Ellipsoid, HPolytope, Intersection

__all__ = [
    "gaussian_normalizer",
    "body_volume",
    "unit_ball_volume",
    "WarmnessAudit",
    "audit_schedule",
]

_SQRT2 = math.sqrt(2.0)


def _phi(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def _gauss_interval(lo: float, hi: float, sigma: float) -> float:
    """integral of exp(-t^2 / (2 sigma^2)) over [lo, hi]."""
    if hi <= lo:
        return 0.0
    return sigma * math.sqrt(2.0 * math.pi) * (_phi(hi / sigma) - _phi(lo / sigma))


@dataclass
class _Reduced:
    dim: int
    box_lo: np.ndarray | None
    box_hi: np.ndarray | None
    ball_r: float
    rows: list  # (a, b) halfspace rows
    ellipsoids: list  # axes tuples


def _reduce(body: BodySpec) -> _Reduced:
    red = _Reduced(body.dim, None, None, math.inf, [], [])

    def visit(variant):
        if isinstance(variant, Ball):
            red.ball_r = min(red.ball_r, variant.radius)
        elif isinstance(variant, Box):
            lo = np.asarray(variant.lo)
            hi = np.asarray(variant.hi)
            if red.box_lo is None:
                red.box_lo, red.box_hi = lo.copy(), hi.copy()
            else:
                red.box_lo = np.maximum(red.box_lo, lo)
                red.box_hi = np.minimum(red.box_hi, hi)
        elif isinstance(variant, HPolytope):
            red.rows.extend(variant.rows)
        elif isinstance(variant, Ellipsoid):
            red.ellipsoids.append(variant.axes)
        elif isinstance(variant, Intersection):
            for m in variant.members:
                visit(m.variant)

    visit(body.variant)
    return red


def _box_corner(red: _Reduced) -> float:
    return math.sqrt(
        float(np.sum(np.maximum(np.abs(red.box_lo), np.abs(red.box_hi)) ** 2))
    )


def _ball_inside_box(red: _Reduced) -> bool:
    return red.ball_r <= float(
        np.min(np.minimum(-red.box_lo, red.box_hi))
    )


def _ball_z(d: int, radius: float, sigma2: float) -> float:
    # integral over B_radius of exp(-|x|^2/(2 sigma2))
    return (2.0 * math.pi * sigma2) ** (d / 2.0) * special.gammainc(
        d / 2.0, radius * radius / (2.0 * sigma2)
    )


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0)


def _chord(red: _Reduced, x: float) -> tuple[float, float]:
    """y-interval of the 2-d body at abscissa x (empty -> hi < lo)."""
    lo, hi = -math.inf, math.inf
    if red.box_lo is not None:
        if x < red.box_lo[0] or x > red.box_hi[0]:
            return 1.0, 0.0
        lo = max(lo, float(red.box_lo[1]))
        hi = min(hi, float(red.box_hi[1]))
    if math.isfinite(red.ball_r):
        rem = red.ball_r * red.ball_r - x * x
        if rem < 0:
            return 1.0, 0.0
        half = math.sqrt(rem)
        lo = max(lo, -half)
        hi = min(hi, half)
    for axes in red.ellipsoids:
        rem = 1.0 - (x / axes[0]) ** 2
        if rem < 0:
            return 1.0, 0.0
        half = axes[1] * math.sqrt(rem)
        lo = max(lo, -half)
        hi = min(hi, half)
    for a, b in red.rows:
        a0, a1 = a
        rhs = b - a0 * x
        if a1 > 0:
            hi = min(hi, rhs / a1)
        elif a1 < 0:
            lo = max(lo, rhs / a1)
        elif rhs < 0:
            return 1.0, 0.0
    return lo, hi


def _x_range(body: BodySpec, red: _Reduced) -> tuple[float, float]:
    lo, hi = -body.circumscribed_radius, body.circumscribed_radius
    if red.box_lo is not None:
        lo = max(lo, float(red.box_lo[0]))
        hi = min(hi, float(red.box_hi[0]))
    if math.isfinite(red.ball_r):
        lo = max(lo, -red.ball_r)
        hi = min(hi, red.ball_r)
    return lo, hi


def _interval_1d(red: _Reduced) -> tuple[float, float]:
    lo, hi = -math.inf, math.inf
    if red.box_lo is not None:
        lo, hi = float(red.box_lo[0]), float(red.box_hi[0])
    if math.isfinite(red.ball_r):
        lo = max(lo, -red.ball_r)
        hi = min(hi, red.ball_r)
    for axes in red.ellipsoids:
        lo = max(lo, -axes[0])
        hi = min(hi, axes[0])
    for a, b in red.rows:
        a0 = a[0]
        if a0 > 0:
            hi = min(hi, b / a0)
        elif a0 < 0:
            lo = max(lo, b / a0)
    return lo, hi


def gaussian_normalizer(body: BodySpec, sigma2: float) -> float:
    """``integral over K of exp(-|x|^2 / (2 sigma2)) dx``."""
    if not (sigma2 > 0):
        raise ContractViolation("sigma2 must be positive")
    sigma = math.sqrt(sigma2)
    red = _reduce(body)
    pure_box = red.box_lo is not None and not red.rows and not red.ellipsoids
    pure_ball = red.box_lo is None and not red.rows and not red.ellipsoids

    if pure_box and (not math.isfinite(red.ball_r) or _box_corner(red) <= red.ball_r):
        out = 1.0
        for lo, hi in zip(red.box_lo, red.box_hi):
            out *= _gauss_interval(float(lo), float(hi), sigma)
        return out
    if pure_ball and math.isfinite(red.ball_r):
        return _ball_z(body.dim, red.ball_r, sigma2)
    if pure_box and _ball_inside_box(red):
        return _ball_z(body.dim, red.ball_r, sigma2)

    if body.dim == 1:
        lo, hi = _interval_1d(red)
        return _gauss_interval(lo, hi, sigma)
    if body.dim == 2:
        xlo, xhi = _x_range(body, red)

        def f(x):
            ylo, yhi = _chord(red, x)
            if yhi <= ylo:
                return 0.0
            return math.exp(-x * x / (2.0 * sigma2)) * _gauss_interval(ylo, yhi, sigma)

        val, _err = integrate.quad(f, xlo, xhi, limit=400, epsabs=1e-13, epsrel=1e-11)
        return val
    raise ContractViolation(
        "quadrature beyond d=2 needs a pure box or ball (possibly truncated)"
    )


def body_volume(body: BodySpec) -> float:
    """Lebesgue volume of the body (same shape support as the normalizer)."""
    red = _reduce(body)
    pure_box = red.box_lo is not None and not red.rows and not red.ellipsoids
    pure_ball = red.box_lo is None and not red.rows and not red.ellipsoids

    if pure_box and (not math.isfinite(red.ball_r) or _box_corner(red) <= red.ball_r):
        return float(np.prod(red.box_hi - red.box_lo))
    if pure_ball and math.isfinite(red.ball_r):
        return unit_ball_volume(body.dim) * red.ball_r**body.dim
    if pure_box and _ball_inside_box(red):
        return unit_ball_volume(body.dim) * red.ball_r**body.dim

    if body.dim == 1:
        lo, hi = _interval_1d(red)
        return max(0.0, hi - lo)
    if body.dim == 2:
        xlo, xhi = _x_range(body, red)

        def f(x):
            ylo, yhi = _chord(red, x)
            return max(0.0, yhi - ylo)

        val, _err = integrate.quad(f, xlo, xhi, limit=400, epsabs=1e-13, epsrel=1e-11)
        return val
    raise ContractViolation(
        "volume beyond d=2 needs a pure box or ball (possibly truncated)"
    )


# ---------------------------------------------------------------------------
# schedule audit


@dataclass
class WarmnessAudit:
    """Exact density-ratio ledger of a cooling schedule.

    ``phase1_ratio`` is the supremum over the unit ball of
    (uniform-on-B1 density) / (first-stage truncated-Gaussian density);
    ``step_ratios[i]`` is the supremum over the truncated body of stage i's
    density against stage i+1's (attained at the origin, where it equals
    the normalizer ratio); ``phase4_ratio`` is the last Gaussian stage
    against uniform; ``truncation_fraction`` is vol(K_bar)/vol(K).
    """

    phase1_ratio: float
    phase1_bound: float
    step_ratios: list[tuple[str, float, float, float]]
    phase4_ratio: float
    truncation_fraction: float

    def step_bound_ok(self, tol: float = 1e-6) -> bool:
        bound = math.sqrt(math.e) + tol
        return all(r <= bound for *_rest, r in self.step_ratios) and (
            self.phase4_ratio <= bound
        )


def audit_schedule(
    body: BodySpec, schedule: CoolingSchedule, gamma: float = 3.0
) -> WarmnessAudit:
    """Quadrature audit of every hand-off in *schedule* over *body*.

    *body* is the original (untruncated) body; the audit uses the schedule's
    truncated companion for the ladder and compares volumes for the
    truncation fraction.
    """
    kbar = schedule.truncated_body
    if kbar is None:
        raise ContractViolation("schedule carries no truncated body")
    d = kbar.dim
    seq = schedule.sigma2_sequence
    labels = schedule.phase_labels

    z = [gaussian_normalizer(kbar, s2) for s2 in seq]
    vol_kbar = body_volume(kbar)
    vol_k = body_volume(body)

    # Uniform-on-B1 vs the first ladder entry, maximized on |x| = 1.
    phase1 = z[0] * math.exp(0.5 / seq[0]) / unit_ball_volume(d)

    steps = []
    for i in range(len(seq) - 1):
        steps.append((labels[i + 1], seq[i], seq[i + 1], z[i + 1] / z[i]))
    phase4 = vol_kbar / z[-1]

    return WarmnessAudit(
        phase1_ratio=phase1,
        phase1_bound=gamma * math.sqrt(d),
        step_ratios=steps,
        phase4_ratio=phase4,
        truncation_fraction=vol_kbar / vol_k,
    )
