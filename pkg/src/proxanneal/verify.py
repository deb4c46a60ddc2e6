"""Statistical and exact verification tools.

Three kinds of oracle live here:

* brute-force grid densities in d <= 2, for TV / Renyi / L^p estimates
  between histograms or quadrature densities;
* exact finite-state chains, for checking the TV-to-sup-norm contraction
  inequality by matrix powering;
* analytic goodness-of-fit suites (KS and chi-square) for the target/body
  pairs whose laws have closed-form or quadrature-computable CDFs: uniform
  or centred Gaussian on axis-aligned boxes and origin-centred balls.

Estimating the sup of an empirical density ratio from samples is biased, so
the Renyi-infinity numbers reported here are only meaningful when both
densities come from quadrature; sampled laws are judged by TV, KS and
chi-square instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .errors import ContractViolation, NoAnalyticOracleError
from .geometry import BodySpec
from .quadrature import _reduce
from .sampler import UNIFORM, TargetSpec

__all__ = [
    "GridDensity",
    "DiscreteChain",
    "GofReport",
    "grid_from_samples",
    "divergence_estimates",
    "boosting_check",
    "random_metropolis_chain",
    "gof_suite",
    "bonferroni_pass",
    "query_scaling_fit",
    "exact_sample",
]

_HIERARCHY_SLACK = 1e-9


# ---------------------------------------------------------------------------
# grid densities


@dataclass
class GridDensity:
    """A probability mass function on a rectangular grid (d <= 2)."""

    edges: tuple[np.ndarray, ...]
    mass: np.ndarray
    out_of_bounds: int = 0

    def __post_init__(self):
        self.edges = tuple(np.asarray(e, dtype=np.float64) for e in self.edges)
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if len(self.edges) not in (1, 2):
            raise ContractViolation("grid densities support d in {1, 2}")
        shape = tuple(e.size - 1 for e in self.edges)
        if self.mass.shape != shape:
            raise ContractViolation("mass shape does not match the grid")
        if np.any(self.mass < 0):
            raise ContractViolation("cell masses must be nonnegative")
        total = float(self.mass.sum())
        if abs(total - 1.0) > 1e-12:
            raise ContractViolation(f"cell masses sum to {total}, not 1")
        for e in self.edges:
            if np.any(np.diff(e) <= 0):
                raise ContractViolation("grid edges must be strictly increasing")

    @property
    def dim(self) -> int:
        return len(self.edges)

    def same_grid(self, other: "GridDensity") -> bool:
        return len(self.edges) == len(other.edges) and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.edges, other.edges)
        )

    def ratio(self, other: "GridDensity") -> np.ndarray:
        """Cellwise mass ratio self/other where other > 0, NaN elsewhere."""
        if not self.same_grid(other):
            raise ContractViolation("grids differ")
        out = np.full_like(self.mass, np.nan)
        pos = other.mass > 0
        out[pos] = self.mass[pos] / other.mass[pos]
        return out

    def apply_kernel(self, P: np.ndarray) -> "GridDensity":
        """Push the flattened mass through a row-stochastic matrix."""
        flat = self.mass.reshape(-1)
        P = np.asarray(P, dtype=np.float64)
        if P.shape != (flat.size, flat.size):
            raise ContractViolation("kernel shape does not match the grid")
        new = flat @ P
        new = np.clip(new, 0.0, None)
        new /= new.sum()
        return GridDensity(self.edges, new.reshape(self.mass.shape))

    @staticmethod
    def uniform(edges) -> "GridDensity":
        """Uniform over the gridded rectangle: mass proportional to cell size."""
        edges = tuple(np.asarray(e, dtype=np.float64) for e in edges)
        widths = [np.diff(e) for e in edges]
        if len(edges) == 1:
            vol = widths[0]
        else:
            vol = np.outer(widths[0], widths[1])
        return GridDensity(edges, vol / vol.sum())

    @staticmethod
    def from_function(fn, edges, refine: int = 8) -> "GridDensity":
        """Cell masses of an unnormalized density by midpoint quadrature."""
        edges = tuple(np.asarray(e, dtype=np.float64) for e in edges)
        if len(edges) == 1:
            (ex,) = edges
            mass = np.zeros(ex.size - 1)
            for i in range(ex.size - 1):
                xs = np.linspace(ex[i], ex[i + 1], refine + 1)
                mid = 0.5 * (xs[:-1] + xs[1:])
                mass[i] = np.sum(fn(mid.reshape(-1, 1))) * (ex[i + 1] - ex[i]) / refine
        else:
            ex, ey = edges
            mass = np.zeros((ex.size - 1, ey.size - 1))
            for i in range(ex.size - 1):
                xs = np.linspace(ex[i], ex[i + 1], refine + 1)
                mx = 0.5 * (xs[:-1] + xs[1:])
                for j in range(ey.size - 1):
                    ys = np.linspace(ey[j], ey[j + 1], refine + 1)
                    my = 0.5 * (ys[:-1] + ys[1:])
                    pts = np.stack(
                        [np.repeat(mx, refine), np.tile(my, refine)], axis=1
                    )
                    cell = (ex[i + 1] - ex[i]) * (ey[j + 1] - ey[j])
                    mass[i, j] = np.sum(fn(pts)) * cell / refine**2
        total = mass.sum()
        if total <= 0:
            raise ContractViolation("density integrates to zero on the grid")
        return GridDensity(edges, mass / total)


def grid_from_samples(samples, edges) -> GridDensity:
    """Normalized histogram of *samples* on the given grid.

    Out-of-bounds samples are counted on the result and excluded from the
    mass; an empty sample list is an error.
    """
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.size == 0:
        raise ContractViolation("no samples")
    edges = tuple(np.asarray(e, dtype=np.float64) for e in edges)
    if pts.shape[1] != len(edges):
        raise ContractViolation("sample dimension does not match the grid")
    hist, _ = np.histogramdd(pts, bins=edges)
    inside = int(hist.sum())
    out = pts.shape[0] - inside
    if inside == 0:
        raise ContractViolation("all samples fall outside the grid")
    return GridDensity(edges, hist / inside, out_of_bounds=out)


def divergence_estimates(
    mu: GridDensity, pi: GridDensity, q: float = 2.0, p: float = 2.0
) -> dict:
    """TV, KL, Renyi-q, Renyi-infinity and the L^p(pi) discrepancy.

    Any mu-mass on cells where pi vanishes makes every pi-relative quantity
    infinite.  The divergence ordering 2 TV^2 <= KL <= R_2 <= R_inf is
    re-checked on every call.
    """
    if not mu.same_grid(pi):
        raise ContractViolation("grids differ")
    if not (q > 1):
        raise ContractViolation("Renyi order q must exceed 1")
    if not (p >= 1):
        raise ContractViolation("L^p order must be at least 1")
    m = mu.mass.reshape(-1)
    w = pi.mass.reshape(-1)
    tv = 0.5 * float(np.abs(m - w).sum())
    violated = bool(np.any((w == 0) & (m > 0)))
    pos = w > 0
    mp, wp = m[pos], w[pos]
    ratio = mp / wp

    def _renyi(order: float) -> float:
        if violated:
            return math.inf
        return float(
            np.log(np.sum(wp * np.where(ratio > 0, ratio, 0.0) ** order))
            / (order - 1.0)
        )

    if violated:
        kl = math.inf
        r_inf = math.inf
        lp = math.inf
    else:
        nz = mp > 0
        kl = float(np.sum(mp[nz] * np.log(ratio[nz])))
        r_inf = float(np.log(np.max(ratio))) if ratio.size else 0.0
        lp = float(np.sum(wp * np.abs(ratio - 1.0) ** p))
    out = {
        "tv": tv,
        "kl": kl,
        "renyi_q": _renyi(q),
        "renyi_inf": r_inf,
        "lp": lp,
        "q": q,
        "p": p,
    }
    r2 = _renyi(2.0)
    slack = _HIERARCHY_SLACK
    if not (
        2.0 * tv * tv <= kl + slack
        and kl <= r2 + slack
        and r2 <= r_inf + slack
    ):
        raise AssertionError(
            f"divergence hierarchy violated: tv={tv} kl={kl} r2={r2} rinf={r_inf}"
        )
    return out


# ---------------------------------------------------------------------------
# finite reversible chains


@dataclass
class DiscreteChain:
    """A finite reversible Markov chain given by (P, pi)."""

    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.pi = np.asarray(self.pi, dtype=np.float64)
        m = self.pi.size
        if self.P.shape != (m, m):
            raise ContractViolation("P must be square and match pi")
        if np.any(self.P < -1e-15) or np.any(self.pi <= 0):
            raise ContractViolation("P must be nonnegative and pi positive")
        if np.max(np.abs(self.P.sum(axis=1) - 1.0)) > 1e-12:
            raise ContractViolation("rows of P must sum to 1")
        if abs(self.pi.sum() - 1.0) > 1e-12:
            raise ContractViolation("pi must sum to 1")
        flux = self.pi[:, None] * self.P
        if np.max(np.abs(flux - flux.T)) > 1e-10:
            raise ContractViolation("chain is not reversible for pi")

    @property
    def states(self) -> int:
        return self.pi.size


def boosting_check(chain: DiscreteChain, mu0, n: int) -> dict:
    """Exact check of the sup-norm contraction against worst-start TV.

    For the reversible chain, computes
    ``lhs = max_i |(mu0 P^n)_i / pi_i - 1|`` and
    ``rhs = max_i |mu0_i / pi_i - 1| * 2 max_x TV(P^n(x, .), pi)`` by matrix
    powering, and reports whether ``lhs <= rhs + 1e-10``.
    """
    mu = np.asarray(mu0, dtype=np.float64)
    if mu.shape != chain.pi.shape or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-10:
        raise ContractViolation("mu0 must be a probability vector on the states")
    if n < 0:
        raise ContractViolation("n must be nonnegative")
    Pn = np.linalg.matrix_power(chain.P, n)
    lhs = float(np.max(np.abs(mu @ Pn / chain.pi - 1.0)))
    sup_tv = float(np.max(0.5 * np.abs(Pn - chain.pi[None, :]).sum(axis=1)))
    rhs = float(np.max(np.abs(mu / chain.pi - 1.0))) * 2.0 * sup_tv
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + 1e-10}


def random_metropolis_chain(m: int, rng: np.random.Generator) -> DiscreteChain:
    """Random reversible chain: Metropolis over a random symmetric proposal."""
    if m < 2:
        raise ContractViolation("need at least two states")
    pi = rng.random(m) + 0.05
    pi /= pi.sum()
    A = rng.random((m, m))
    A = 0.5 * (A + A.T)
    np.fill_diagonal(A, 0.0)
    scale = float(A.sum(axis=1).max()) * 1.05
    Q = A / scale
    np.fill_diagonal(Q, 1.0 - Q.sum(axis=1))
    accept = np.minimum(1.0, pi[None, :] / pi[:, None])
    P = Q * accept
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return DiscreteChain(P, pi)


# ---------------------------------------------------------------------------
# goodness of fit


@dataclass
class GofReport:
    statistic_name: str
    statistic_value: float
    p_value: float
    sample_size: int

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ContractViolation("p-value must lie in [0, 1]")


def bonferroni_pass(reports: Sequence[GofReport], alpha: float = 0.01) -> bool:
    """All tests pass at level alpha after Bonferroni correction."""
    if not reports:
        raise ContractViolation("no reports to judge")
    cut = alpha / len(reports)
    return all(r.p_value >= cut for r in reports)


def _analytic_form(body: BodySpec) -> tuple[str, object]:
    """Reduce the body to ('box', (lo, hi)) or ('ball', R) when possible."""
    red = _reduce(body)
    has_other = bool(red.rows) or bool(red.ellipsoids)
    if has_other:
        raise NoAnalyticOracleError(
            "no analytic oracle for polytope/ellipsoid bodies"
        )
    if red.box_lo is not None:
        from .quadrature import _ball_inside_box, _box_corner

        if not math.isfinite(red.ball_r) or _box_corner(red) <= red.ball_r:
            return "box", (red.box_lo.copy(), red.box_hi.copy())
        if _ball_inside_box(red):
            return "ball", red.ball_r
        raise NoAnalyticOracleError(
            "no analytic oracle for a proper box/ball intersection"
        )
    if math.isfinite(red.ball_r):
        return "ball", red.ball_r
    raise NoAnalyticOracleError("body reduces to no analytic form")


def _ks(name: str, values: np.ndarray, cdf) -> GofReport:
    res = stats.kstest(values, cdf, mode="asymp")
    return GofReport(name, float(res.statistic), float(res.pvalue), values.size)


def _chi2(name: str, counts: np.ndarray, probs: np.ndarray, n: int) -> GofReport:
    keep = probs > 1e-12
    counts, probs = counts[keep], probs[keep]
    probs = probs / probs.sum()
    expected = probs * n
    stat = float(np.sum((counts - expected) ** 2 / expected))
    dof = counts.size - 1
    return GofReport(name, stat, float(stats.chi2.sf(stat, dof)), n)


def _coarse_cells(n: int, d: int) -> int:
    return int(max(2, min(8, (n / 20.0) ** (1.0 / d))))


def _ball_radial_cdf(target: TargetSpec, R: float, d: int):
    if target.kind == UNIFORM:
        return lambda r: np.clip(np.asarray(r) / R, 0.0, 1.0) ** d
    s2 = target.sigma2
    denom = special.gammainc(d / 2.0, R * R / (2.0 * s2))

    def cdf(r):
        r = np.clip(np.asarray(r, dtype=np.float64), 0.0, R)
        return special.gammainc(d / 2.0, r * r / (2.0 * s2)) / denom

    return cdf


def _ball_marginal_cdf(target: TargetSpec, R: float, d: int):
    """CDF of one coordinate for a ball target (numeric for Gaussian, d>1)."""
    if target.kind == UNIFORM:
        a = (d + 1) / 2.0

        def cdf(x):
            t = np.clip((np.asarray(x) / R + 1.0) / 2.0, 0.0, 1.0)
            return special.betainc(a, a, t)

        return cdf
    s2 = target.sigma2
    if d == 1:
        return _truncnorm_cdf(-R, R, math.sqrt(s2))
    grid = np.linspace(-R, R, 4001)
    slice_mass = special.gammainc((d - 1) / 2.0, (R * R - grid * grid) / (2.0 * s2))
    g = np.exp(-grid * grid / (2.0 * s2)) * slice_mass
    cum = np.concatenate([[0.0], np.cumsum((g[1:] + g[:-1]) * 0.5 * np.diff(grid))])
    cum /= cum[-1]

    def cdf(x):
        return np.interp(np.asarray(x, dtype=np.float64), grid, cum)

    return cdf


def _truncnorm_cdf(lo: float, hi: float, sigma: float):
    a, b = stats.norm.cdf(lo / sigma), stats.norm.cdf(hi / sigma)

    def cdf(x):
        z = stats.norm.cdf(np.clip(np.asarray(x), lo, hi) / sigma)
        return (z - a) / (b - a)

    return cdf


def gof_suite(samples, target: TargetSpec) -> list[GofReport]:
    """Goodness-of-fit reports of *samples* against an analytic target law.

    Supported pairs: uniform or centred truncated Gaussian on an axis-aligned
    box or an origin-centred ball (truncations that reduce to those count).
    Anything else raises :class:`NoAnalyticOracleError` - never a silent
    pass.  Emits per-coordinate KS tests, a radial KS test for balls, and a
    chi-square test on a coarse partition.
    """
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    n, d = pts.shape
    if n < 10:
        raise ContractViolation("too few samples for goodness-of-fit")
    if d != target.body.dim:
        raise ContractViolation("sample dimension does not match the body")
    form, data = _analytic_form(target.body)
    reports: list[GofReport] = []

    if form == "box":
        lo, hi = data
        cells = _coarse_cells(n, d)
        cell_probs = []
        cell_counts = []
        for j in range(d):
            if target.kind == UNIFORM:
                cdf = lambda x, L=lo[j], H=hi[j]: np.clip(
                    (np.asarray(x) - L) / (H - L), 0.0, 1.0
                )
            else:
                sigma = math.sqrt(target.sigma2)
                shifted = _truncnorm_cdf(lo[j], hi[j], sigma)
                cdf = shifted
            reports.append(_ks(f"ks_coord{j}", pts[:, j], cdf))
            edges = np.linspace(lo[j], hi[j], cells + 1)
            cell_probs.append(np.diff(cdf(edges)))
            cell_counts.append(np.histogram(pts[:, j], bins=edges)[0])
        # coordinates are independent for both box targets
        probs = cell_probs[0]
        counts = cell_counts[0]
        for j in range(1, d):
            probs = np.outer(probs, cell_probs[j]).reshape(-1)
        if d > 1:
            grid_counts, _ = np.histogramdd(
                pts, bins=[np.linspace(lo[j], hi[j], cells + 1) for j in range(d)]
            )
            counts = grid_counts.reshape(-1)
        reports.append(_chi2("chi2_grid", np.asarray(counts, float), probs, n))
        return reports

    R = data
    radii = np.sqrt(np.sum(pts * pts, axis=1))
    rad_cdf = _ball_radial_cdf(target, R, d)
    reports.append(_ks("ks_radial", radii, rad_cdf))
    marg = _ball_marginal_cdf(target, R, d)
    for j in range(d):
        reports.append(_ks(f"ks_coord{j}", pts[:, j], marg))
    shells = _coarse_cells(n, 1)
    edges = np.linspace(0.0, R, shells + 1)
    probs = np.diff(rad_cdf(edges))
    counts = np.histogram(radii, bins=edges)[0]
    reports.append(_chi2("chi2_radial", np.asarray(counts, float), probs, n))
    return reports


# ---------------------------------------------------------------------------
# exact reference samplers (independent of the chain kernels)


def exact_sample(target: TargetSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n exact samples from an analytically tractable target."""
    body = target.body
    d = body.dim
    form, data = _analytic_form(body)
    if form == "box":
        lo, hi = data
        if target.kind == UNIFORM:
            return lo + (hi - lo) * rng.random((n, d))
        sigma = math.sqrt(target.sigma2)
        cols = []
        for j in range(d):
            a, b = lo[j] / sigma, hi[j] / sigma
            cols.append(
                stats.truncnorm.rvs(a, b, scale=sigma, size=n, random_state=rng)
            )
        return np.stack(cols, axis=1)
    R = data
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    u = rng.random(n)
    if target.kind == UNIFORM:
        r = R * u ** (1.0 / d)
    else:
        s2 = target.sigma2
        top = special.gammainc(d / 2.0, R * R / (2.0 * s2))
        r = np.sqrt(2.0 * s2 * special.gammaincinv(d / 2.0, u * top))
    return dirs * r[:, None]


# ---------------------------------------------------------------------------
# scaling regression


def _extract_queries(value) -> list[float]:
    if hasattr(value, "total_queries"):
        return [float(value.total_queries)]
    if isinstance(value, (int, float, np.integer, np.floating)):
        return [float(value)]
    return [q for item in value for q in _extract_queries(item)]


def query_scaling_fit(reports: Mapping[int, object]) -> dict:
    """Least-squares fit of log(total queries) against log(dimension).

    *reports* maps each dimension to a cooling report, a raw query count, or
    a sequence of either.  Needs at least 4 distinct dimensions; the slope
    is the empirical query exponent.
    """
    xs: list[float] = []
    ys: list[float] = []
    dims = set()
    for dval, value in reports.items():
        queries = _extract_queries(value)
        if not queries:
            continue
        dims.add(int(dval))
        for q in queries:
            if q <= 0:
                raise ContractViolation("query counts must be positive")
            xs.append(math.log(float(dval)))
            ys.append(math.log(q))
    if len(dims) < 4:
        raise ContractViolation("need at least 4 distinct dimensions")
    x = np.asarray(xs)
    y = np.asarray(ys)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}
