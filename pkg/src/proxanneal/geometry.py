"""Convex bodies behind a membership oracle.

A body is declared, not discovered: every :class:`BodySpec` carries the
ambient dimension, an analytic variant (ball, axis-aligned box, H-polytope,
axis-aligned ellipsoid, or an intersection of those), a radius ``r_in`` of a
ball around the origin known to sit inside the body, and a radius ``D`` of a
ball known to contain it.  The only runtime access path to the set is
:func:`contains`, which answers "is x in K?" and charges one query to the
supplied ledger.

Conventions:

* Bodies are closed; boundary points count as inside (``<=`` comparisons,
  no floating-point slack).
* The sampling routines require ``r_in >= 1`` (the unit ball must fit inside
  the body).  Declarations with ``r_in < 1`` are rejected at construction
  unless ``allow_unnormalized=True``, and can be normalized with
  :func:`rescale_to_unit_inscribed`.
"""

from __future__ import annotations

import json
import math
from dataclasses import InitVar, dataclass, field
from typing import Union

import numpy as np

from .errors import ContractViolation, InvalidBodyError, InvalidTruncationError

__all__ = [
    "Ball",
    "Box",
    "HPolytope",
    "Ellipsoid",
    "Intersection",
    "BodySpec",
    "QueryLedger",
    "contains",
    "truncate_to_ball",
    "sample_unit_ball",
    "rescale_to_unit_inscribed",
    "body_to_dict",
    "body_from_dict",
    "dump_body",
    "load_body",
    "MembershipProgram",
    "compile_body",
]

# ---------------------------------------------------------------------------
# vectors


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and convert *x* to a float64 coordinate vector.

    Entries must be finite; when *dim* is given the length must match.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ContractViolation(f"expected a 1-d point, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractViolation("point has non-finite coordinates")
    if dim is not None and v.size != dim:
        raise ContractViolation(f"point has dimension {v.size}, body has {dim}")
    return v


# ---------------------------------------------------------------------------
# variants

Scalar = float


@dataclass(frozen=True)
class Ball:
    """Origin-centred euclidean ball of the given radius."""

    radius: Scalar


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lo_j <= x_j <= hi_j``."""

    lo: tuple[Scalar, ...]
    hi: tuple[Scalar, ...]


@dataclass(frozen=True)
class HPolytope:
    """Halfspace intersection ``a_i . x <= b_i`` for each row ``(a_i, b_i)``."""

    rows: tuple[tuple[tuple[Scalar, ...], Scalar], ...]


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid ``sum_j (x_j / axes_j)^2 <= 1``."""

    axes: tuple[Scalar, ...]


@dataclass(frozen=True)
class Intersection:
    """Intersection of member bodies, evaluated in declared order."""

    members: tuple["BodySpec", ...]


Variant = Union[Ball, Box, HPolytope, Ellipsoid, Intersection]


def _variant_dim(variant: Variant, declared: int) -> None:
    if isinstance(variant, Ball):
        return
    if isinstance(variant, Box):
        if len(variant.lo) != declared or len(variant.hi) != declared:
            raise InvalidBodyError("box bounds do not match the declared dimension")
        return
    if isinstance(variant, HPolytope):
        if not variant.rows:
            raise InvalidBodyError("H-polytope needs at least one row")
        for a, _ in variant.rows:
            if len(a) != declared:
                raise InvalidBodyError("H-polytope row does not match the dimension")
        return
    if isinstance(variant, Ellipsoid):
        if len(variant.axes) != declared:
            raise InvalidBodyError("ellipsoid axes do not match the dimension")
        return
    if isinstance(variant, Intersection):
        if not variant.members:
            raise InvalidBodyError("intersection needs at least one member")
        for m in variant.members:
            if m.dim != declared:
                raise InvalidBodyError("intersection member dimension mismatch")
        return
    raise InvalidBodyError(f"unknown variant {type(variant).__name__}")


def _check_inscribed(variant: Variant, r_in: float) -> None:
    """Verify that the ball of radius ``r_in`` around 0 sits inside the variant."""
    if isinstance(variant, Ball):
        if r_in > variant.radius:
            raise InvalidBodyError("inscribed radius exceeds the ball radius")
    elif isinstance(variant, Box):
        if any(lo > -r_in for lo in variant.lo) or any(hi < r_in for hi in variant.hi):
            raise InvalidBodyError("inscribed ball pokes out of the box")
    elif isinstance(variant, HPolytope):
        for a, b in variant.rows:
            if b < r_in * math.sqrt(sum(aj * aj for aj in a)):
                raise InvalidBodyError("inscribed ball violates a polytope row")
    elif isinstance(variant, Ellipsoid):
        if min(variant.axes) < r_in:
            raise InvalidBodyError("inscribed ball exceeds the shortest ellipsoid axis")
    elif isinstance(variant, Intersection):
        for m in variant.members:
            if m.inscribed_radius < r_in:
                raise InvalidBodyError(
                    "intersection member declares a smaller inscribed radius"
                )


def _check_circumscribed(variant: Variant, dim: int, D: float) -> None:
    """Verify K subset B_D(0) where the variant admits an exact check.

    H-polytopes are trusted as declared (an exact check would need vertex
    enumeration); the randomized consistency test in the suite covers them.
    """
    if isinstance(variant, Ball):
        if variant.radius > D:
            raise InvalidBodyError("ball radius exceeds the circumscribed radius")
    elif isinstance(variant, Box):
        corner = math.sqrt(
            sum(max(abs(lo), abs(hi)) ** 2 for lo, hi in zip(variant.lo, variant.hi))
        )
        if corner > D * (1 + 1e-12):
            raise InvalidBodyError("box corner lies outside the circumscribed ball")
    elif isinstance(variant, Ellipsoid):
        if max(variant.axes) > D:
            raise InvalidBodyError("ellipsoid axis exceeds the circumscribed radius")
    # H-polytopes and intersections tighter than their members are trusted.


@dataclass(frozen=True)
class BodySpec:
    """A convex body with declared inscribed/circumscribed radii."""

    dim: int
    variant: Variant
    inscribed_radius: float
    circumscribed_radius: float
    allow_unnormalized: InitVar[bool] = False

    def __post_init__(self, allow_unnormalized: bool) -> None:
        if self.dim < 1:
            raise InvalidBodyError("dimension must be at least 1")
        if not (0 < self.inscribed_radius <= self.circumscribed_radius):
            raise InvalidBodyError("need 0 < r_in <= D")
        if self.inscribed_radius < 1 and not allow_unnormalized:
            raise InvalidBodyError(
                "inscribed radius < 1; rescale with rescale_to_unit_inscribed "
                "or pass allow_unnormalized=True"
            )
        _variant_dim(self.variant, self.dim)
        _check_inscribed(self.variant, self.inscribed_radius)
        _check_circumscribed(self.variant, self.dim, self.circumscribed_radius)


# ---------------------------------------------------------------------------
# constructors


def ball(dim: int, radius: float, inscribed: float | None = None, **kw) -> BodySpec:
    # default declaration keeps the standard normalization B_1(0) inside K
    r_in = min(1.0, float(radius)) if inscribed is None else float(inscribed)
    return BodySpec(dim, Ball(float(radius)), r_in, float(radius), **kw)


def box(lo, hi, **kw) -> BodySpec:
    lo_t = tuple(float(v) for v in np.atleast_1d(lo))
    hi_t = tuple(float(v) for v in np.atleast_1d(hi))
    r_in = min(min(-v for v in lo_t), min(hi_t))
    D = math.sqrt(sum(max(abs(a), abs(b)) ** 2 for a, b in zip(lo_t, hi_t)))
    return BodySpec(len(lo_t), Box(lo_t, hi_t), r_in, D, **kw)


def cube(dim: int, half_width: float, **kw) -> BodySpec:
    """The box ``[-half_width, half_width]^dim``."""
    return box([-half_width] * dim, [half_width] * dim, **kw)


# ---------------------------------------------------------------------------
# query ledger


@dataclass
class QueryLedger:
    """Running account of membership-oracle usage for a single chain.

    ``total_queries`` counts every oracle call; ``per_iteration_trials``
    holds the number of rejection trials charged by each completed sampler
    iteration (one query per trial); ``failures`` counts exhausted backward
    steps.  Counts only ever grow.
    """

    total_queries: int = 0
    failures: int = 0
    _chunks: list = field(default_factory=list, repr=False)

    @property
    def per_iteration_trials(self) -> np.ndarray:
        if not self._chunks:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.atleast_1d(c) for c in self._chunks])

    def record_query(self, count: int = 1) -> None:
        if count < 0:
            raise ContractViolation("query counts cannot decrease")
        self.total_queries += count

    def record_iteration(self, trials: int) -> None:
        self._chunks.append(np.asarray([int(trials)], dtype=np.int64))
        self.total_queries += int(trials)

    def record_iterations(self, trials: np.ndarray) -> None:
        arr = np.asarray(trials, dtype=np.int64)
        self._chunks.append(arr)
        self.total_queries += int(arr.sum())

    def record_failure(self) -> None:
        self.failures += 1


# ---------------------------------------------------------------------------
# membership program: the flat form evaluated by the kernels

KIND_BALL = 0
KIND_BOX = 1
KIND_HPOLYTOPE = 2
KIND_ELLIPSOID = 3


@dataclass(frozen=True)
class MembershipProgram:
    """Flattened constraint list for kernel-side evaluation.

    An intersection of convex bodies is the conjunction of its members'
    constraints, so any variant tree flattens (in declared order) to a list
    of primitive constraints over one parameter buffer.
    """

    dim: int
    kinds: np.ndarray  # int64, one entry per primitive
    bounds: np.ndarray  # int64, kinds.size + 1 offsets into params
    params: np.ndarray  # float64 parameter buffer

    def __eq__(self, other):  # pragma: no cover - identity is enough
        return self is other


def _flatten(variant: Variant, kinds: list, params: list, dim: int, bounds: list):
    if isinstance(variant, Ball):
        kinds.append(KIND_BALL)
        params.append(variant.radius)
    elif isinstance(variant, Box):
        kinds.append(KIND_BOX)
        params.extend(variant.lo)
        params.extend(variant.hi)
    elif isinstance(variant, HPolytope):
        kinds.append(KIND_HPOLYTOPE)
        for a, b in variant.rows:
            params.extend(a)
            params.append(b)
    elif isinstance(variant, Ellipsoid):
        kinds.append(KIND_ELLIPSOID)
        params.extend(variant.axes)
    elif isinstance(variant, Intersection):
        for m in variant.members:
            _flatten(m.variant, kinds, params, dim, bounds)
        return
    bounds.append(len(params))


_PROGRAM_CACHE: dict[BodySpec, MembershipProgram] = {}


def compile_body(body: BodySpec) -> MembershipProgram:
    """Flatten *body* to a :class:`MembershipProgram` (cached per body)."""
    prog = _PROGRAM_CACHE.get(body)
    if prog is not None:
        return prog
    kinds: list[int] = []
    params: list[float] = []
    bounds: list[int] = [0]
    _flatten(body.variant, kinds, params, body.dim, bounds)
    prog = MembershipProgram(
        dim=body.dim,
        kinds=np.asarray(kinds, dtype=np.int64),
        bounds=np.asarray(bounds, dtype=np.int64),
        params=np.asarray(params, dtype=np.float64),
    )
    if len(_PROGRAM_CACHE) > 4096:
        _PROGRAM_CACHE.clear()
    _PROGRAM_CACHE[body] = prog
    return prog


# ---------------------------------------------------------------------------
# operations


def contains(body: BodySpec, x, ledger: QueryLedger | None = None) -> bool:
    """Membership oracle: is ``x`` in the body (boundary inclusive)?

    Charges exactly one query to *ledger* when one is supplied, regardless of
    how many primitive constraints an intersection evaluates.
    """
    v = as_vector(x, body.dim)
    if ledger is not None:
        ledger.record_query(1)
    from . import kernels

    prog = compile_body(body)
    return bool(kernels.active().contains(prog.kinds, prog.bounds, prog.params, v))


def truncate_to_ball(body: BodySpec, radius: float) -> BodySpec:
    """Intersect *body* with the origin-centred ball of the given radius.

    The inscribed radius survives (the truncation radius must not undercut
    it); the circumscribed radius tightens to ``min(D, radius)``.
    """
    if radius < body.inscribed_radius:
        raise InvalidTruncationError(
            "truncation radius would destroy the inscribed ball"
        )
    cap = ball(body.dim, float(radius), inscribed=float(radius), allow_unnormalized=True)
    return BodySpec(
        dim=body.dim,
        variant=Intersection((body, cap)),
        inscribed_radius=body.inscribed_radius,
        circumscribed_radius=min(body.circumscribed_radius, float(radius)),
        allow_unnormalized=body.inscribed_radius < 1,
    )


def sample_unit_ball(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the unit ball B_1(0).

    Direction from a normalized standard Gaussian, radius ``U**(1/d)``.
    """
    if d < 1:
        raise ContractViolation("dimension must be at least 1")
    z = rng.standard_normal(d)
    norm = math.sqrt(float(z @ z))
    while norm == 0.0:  # probability-zero guard
        z = rng.standard_normal(d)
        norm = math.sqrt(float(z @ z))
    r = rng.random() ** (1.0 / d)
    return (r / norm) * z


def _scale_variant(variant: Variant, s: float) -> Variant:
    if isinstance(variant, Ball):
        return Ball(variant.radius / s)
    if isinstance(variant, Box):
        return Box(
            tuple(v / s for v in variant.lo), tuple(v / s for v in variant.hi)
        )
    if isinstance(variant, HPolytope):
        return HPolytope(tuple((a, b / s) for a, b in variant.rows))
    if isinstance(variant, Ellipsoid):
        return Ellipsoid(tuple(v / s for v in variant.axes))
    if isinstance(variant, Intersection):
        return Intersection(tuple(_rescale(m, s) for m in variant.members))
    raise InvalidBodyError(f"unknown variant {type(variant).__name__}")


def _rescale(body: BodySpec, s: float) -> BodySpec:
    return BodySpec(
        dim=body.dim,
        variant=_scale_variant(body.variant, s),
        inscribed_radius=body.inscribed_radius / s,
        circumscribed_radius=body.circumscribed_radius / s,
        allow_unnormalized=True,
    )


def rescale_to_unit_inscribed(body: BodySpec) -> tuple[BodySpec, float]:
    """Divide coordinates by ``r_in`` so the unit ball fits exactly.

    Returns ``(rescaled_body, scale)`` with ``x_original = scale * x_new``.
    """
    s = body.inscribed_radius
    return _rescale(body, s), s


# ---------------------------------------------------------------------------
# serialization

_VARIANT_NAMES = {
    Ball: "ball",
    Box: "box",
    HPolytope: "hpolytope",
    Ellipsoid: "ellipsoid",
    Intersection: "intersection",
}


def _variant_params(variant: Variant) -> dict:
    if isinstance(variant, Ball):
        return {"radius": variant.radius}
    if isinstance(variant, Box):
        return {"lo": list(variant.lo), "hi": list(variant.hi)}
    if isinstance(variant, HPolytope):
        return {"rows": [{"a": list(a), "b": b} for a, b in variant.rows]}
    if isinstance(variant, Ellipsoid):
        return {"axes": list(variant.axes)}
    if isinstance(variant, Intersection):
        return {"members": [body_to_dict(m) for m in variant.members]}
    raise InvalidBodyError(f"unknown variant {type(variant).__name__}")


def body_to_dict(body: BodySpec) -> dict:
    return {
        "dim": body.dim,
        "variant": _VARIANT_NAMES[type(body.variant)],
        "params": _variant_params(body.variant),
        "inscribed_radius": body.inscribed_radius,
        "circumscribed_radius": body.circumscribed_radius,
    }


def body_from_dict(doc: dict, allow_unnormalized: bool = False) -> BodySpec:
    try:
        name = doc["variant"]
        params = doc["params"]
        dim = int(doc["dim"])
        r_in = float(doc["inscribed_radius"])
        D = float(doc["circumscribed_radius"])
    except (KeyError, TypeError) as exc:
        raise InvalidBodyError(f"malformed body document: {exc}") from exc
    if name == "ball":
        variant: Variant = Ball(float(params["radius"]))
    elif name == "box":
        variant = Box(
            tuple(float(v) for v in params["lo"]),
            tuple(float(v) for v in params["hi"]),
        )
    elif name == "hpolytope":
        variant = HPolytope(
            tuple(
                (tuple(float(v) for v in row["a"]), float(row["b"]))
                for row in params["rows"]
            )
        )
    elif name == "ellipsoid":
        variant = Ellipsoid(tuple(float(v) for v in params["axes"]))
    elif name == "intersection":
        variant = Intersection(
            tuple(body_from_dict(m, allow_unnormalized=True) for m in params["members"])
        )
    else:
        raise InvalidBodyError(f"unknown variant name {name!r}")
    return BodySpec(dim, variant, r_in, D, allow_unnormalized=allow_unnormalized)


def dump_body(body: BodySpec) -> str:
    """Serialize to the body-definition JSON document (round-trip exact)."""
    return json.dumps(body_to_dict(body), indent=2, sort_keys=True)


def load_body(text: str, allow_unnormalized: bool = False) -> BodySpec:
    return body_from_dict(json.loads(text), allow_unnormalized=allow_unnormalized)
