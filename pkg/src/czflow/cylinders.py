"""Cylinders P_{r,E}(a) = {(n,1) exp(tZ) : n in E, t in (log(a/r), log(ar))}.

Base sets are dyadic cubes of one cube system, balls, or sample-only
handles (:class:`MappedSet`). All inequalities of the admissibility
calculus are evaluated on logarithms so that very large radii and very
small anchors stay representable.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .cubes import CubeSystem, DyadicCube, WindowError
from .group import (
    GroupPoint,
    VerticalField,
    base_inv,
    base_mul,
    dist_G_array,
    dist_N,
    flow_base,
    norm_N,
    psi_t,
    to_flow_array,
)
from .measure import FlowMeasure, base_density, estimate_doubling, mu_N_of_ball

__all__ = [
    "Ball",
    "MappedSet",
    "Cylinder",
    "Admissibility",
    "AdmissibilityParams",
    "Parents",
    "U_interval",
    "contains",
    "contains_flow",
    "contains_array",
    "translate_right",
    "translate_left_exp",
    "translate_left_base",
    "intersects",
    "cylinder_measure",
    "is_admissible",
    "sons",
    "parents",
    "strip_down",
    "strip_up",
    "envelope",
    "StarEnlargement",
    "enlargement_star",
    "star_constants",
    "cylinder_in_ball_check",
    "sample_cylinder",
    "random_admissible",
    "anchor_range",
    "product_factorization",
    "mc_cylinder_measure",
    "cylinder_record",
]

REL_TOL = 1e-12


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.ravel(self.center)))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")


@dataclass(frozen=True)
class MappedSet:
    """A base set known only through a membership predicate on arrays."""

    predicate: Callable = field(compare=False)
    description: str = ""

    def __call__(self, n) -> np.ndarray:
        return np.asarray(self.predicate(np.asarray(n, dtype=np.float64)), dtype=bool)


@dataclass(frozen=True)
class Cylinder:
    """P_{r,Q}(a). ``log_radius`` keeps radii whose r overflows a float (r is then inf)."""

    r: float
    base: object
    a: float
    log_radius: float | None = None

    def __post_init__(self):
        if self.log_radius is None:
            if not self.r > 1:
                raise ValueError(f"cylinder radius must exceed 1, got {self.r}")
            object.__setattr__(self, "log_radius", math.log(self.r))
        elif not self.log_radius > 0:
            raise ValueError(f"cylinder radius must exceed 1, got log r = {self.log_radius}")
        if not self.a > 0:
            raise ValueError(f"cylinder anchor must be positive, got {self.a}")

    @classmethod
    def from_log(cls, log_r: float, base, a: float) -> "Cylinder":
        r = math.exp(log_r) if log_r < 709.0 else math.inf
        return cls(r, base, a, float(log_r))

    @property
    def log_r(self) -> float:
        return self.log_radius

    @property
    def log_a(self) -> float:
        return math.log(self.a)

    @property
    def generation(self) -> int:
        if not isinstance(self.base, DyadicCube):
            raise TypeError("cylinder base is not a dyadic cube")
        return self.base.generation

    @property
    def cube(self) -> DyadicCube:
        if not isinstance(self.base, DyadicCube):
            raise TypeError("cylinder base is not a dyadic cube")
        return self.base

    def with_base(self, base) -> "Cylinder":
        return replace(self, base=base)


class Admissibility(str, enum.Enum):
    LARGE = "large"
    SMALL = "small"
    NOT = "not_admissible"

    @property
    def ok(self) -> bool:
        return self is not Admissibility.NOT


@dataclass(frozen=True)
class AdmissibilityParams:
    gamma: float = 5.0
    lam: float = 2.1 * math.e ** 3
    delta: float = 0.5

    def __post_init__(self):
        if not self.gamma >= 5:
            raise ValueError("gamma must be at least 5")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.lam * self.delta > math.e ** 3:
            raise ValueError("lambda must exceed e^3 / delta")

    @property
    def log_lam(self) -> float:
        return math.log(self.lam)

    @property
    def log_delta(self) -> float:
        return math.log(self.delta)

    @property
    def C2(self) -> float:
        """Envelope constant 3 max{gamma + 1 + log lambda, lambda e^3}."""
        return 3.0 * max(self.gamma + 1.0 + self.log_lam, self.lam * math.e ** 3)


def U_interval(P: Cylinder):
    """(log(a/r), log(ar))."""
    la, lr = P.log_a, P.log_r
    return la - lr, la + lr


def contains_flow(P: Cylinder, n, t, spec=None) -> np.ndarray:
    """Membership for points given in flow coordinates (n, t)."""
    lo, hi = U_interval(P)
    t = np.asarray(t, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if spec is None:
        if not isinstance(P.base, DyadicCube):
            raise ValueError("non-cube bases need the group spec")
        spec = P.base.system.spec
    inside_t = (t > lo) & (t < hi)
    shape = np.broadcast_shapes(inside_t.shape, n.shape[:-1])
    inside_t = np.broadcast_to(inside_t, shape)
    out = np.zeros(shape, dtype=bool)
    if np.any(inside_t):
        nn = np.broadcast_to(n, shape + (n.shape[-1],))[inside_t]
        out[inside_t] = _membership(P.base, nn, spec)
    return out


def _contains_windowed(base, n):
    # points outside a net window are outside every cell
    system = base.system
    ok = norm_N(system.spec, n) <= getattr(system, "window", math.inf)
    out = np.zeros(n.shape[0], dtype=bool)
    if ok.any():
        out[ok] = system.contains(base, n[ok])
    return out


def contains_array(P: Cylinder, Z: VerticalField, n, a) -> np.ndarray:
    """Membership for points (n, a) in group coordinates."""
    n0, t = to_flow_array(Z, n, a)
    return contains_flow(P, n0, t, Z.spec)


def contains(P: Cylinder, x: GroupPoint, Z: VerticalField) -> bool:
    x.check(Z.spec)
    return bool(contains_array(P, Z, x.n_array, x.a))


# algebra ------------------------------------------------------------------

def translate_right(P: Cylinder, s: float) -> Cylinder:
    """P exp(sZ) = P_{r,E}(a e^s)."""
    return replace(P, a=P.a * math.exp(s))


def translate_left_exp(P: Cylinder, s: float, Z: VerticalField) -> Cylinder:
    """exp(sZ) P = P_{r, psi_s(E)}(a e^s); the base becomes a sample handle."""
    base = P.base
    spec = Z.spec

    def pred(n, _s=s, _base=base):
        return _membership(_base, psi_t(-_s, n, Z), spec)

    return Cylinder(P.r, MappedSet(pred, f"psi_{s:g}(E)"), P.a * math.exp(s))


def translate_left_base(P: Cylinder, m, Z: VerticalField) -> Cylinder:
    """(m, 1) P = P_{r, mE}(a); the base becomes a sample handle."""
    spec = Z.spec
    m = np.asarray(m, dtype=np.float64)
    base = P.base

    def pred(n, _m=m, _base=base):
        return _membership(_base, base_mul(spec, base_inv(spec, _m), n), spec)

    return Cylinder(P.r, MappedSet(pred, "mE"), P.a)


def _membership(base, n, spec):
    if isinstance(base, Ball):
        return dist_N(spec, np.asarray(base.center), n) < base.radius
    if isinstance(base, DyadicCube):
        try:
            return base.system.contains(base, n)
        except WindowError:
            return _contains_windowed(base, n)
    if isinstance(base, MappedSet):
        return base(n)
    raise TypeError(f"unsupported base set {type(base).__name__}")


def intersects(P1: Cylinder, P2: Cylinder) -> bool:
    """Base cubes not disjoint and open intervals overlapping beyond rounding."""
    if not (isinstance(P1.base, DyadicCube) and isinstance(P2.base, DyadicCube)):
        raise TypeError("intersects needs cube bases from one cube system")
    if P1.base.system is not P2.base.system:
        raise TypeError("cube bases come from different systems")
    lo1, hi1 = U_interval(P1)
    lo2, hi2 = U_interval(P2)
    lo, hi = max(lo1, lo2), min(hi1, hi2)
    # intervals that only touch (up to rounding of the logs) are disjoint
    if not lo < hi - REL_TOL * max(1.0, abs(lo), abs(hi)):
        return False
    return P1.base.system.relation(P1.base, P2.base) != "disjoint"


def base_measure(base, mu: FlowMeasure) -> float:
    if isinstance(base, DyadicCube):
        return base.system.measure(base)
    if isinstance(base, Ball):
        return mu_N_of_ball(mu, base.center, base.radius)
    raise TypeError("measure of a sample-only base set is not available")


def cylinder_measure(P: Cylinder, mu: FlowMeasure | None = None) -> float:
    """mu(P_{r,E}(a)) = 2 mu_N(E) log r."""
    if isinstance(P.base, DyadicCube):
        return 2.0 * P.base.system.measure(P.base) * P.log_r
    if mu is None:
        raise ValueError("a measure is needed for non-cube bases")
    return 2.0 * base_measure(P.base, mu) * P.log_r


# admissibility -------------------------------------------------------------

def _le(x: float, y: float) -> bool:
    return x <= y + REL_TOL * max(1.0, abs(x), abs(y))


def is_admissible(P: Cylinder, params: AdmissibilityParams) -> Admissibility:
    """Large: r > e and a r^2 <= delta^k <= lambda a r^gamma.
    Small: 1 < r <= e and a e^2 log r <= delta^k <= lambda a e^2 log r."""
    k = P.generation
    lr, la = P.log_r, P.log_a
    ld = k * params.log_delta
    if lr > 1.0:
        if _le(la + 2.0 * lr, ld) and _le(ld, params.log_lam + la + params.gamma * lr):
            return Admissibility.LARGE
        return Admissibility.NOT
    low = la + 2.0 + math.log(lr)
    if _le(low, ld) and _le(ld, params.log_lam + low):
        return Admissibility.SMALL
    return Admissibility.NOT


def anchor_range(k: int, r: float, params: AdmissibilityParams):
    """Closed interval of log a making P_{r,Q}(a) admissible for Q of generation k."""
    lr = math.log(r)
    ld = k * params.log_delta
    if lr > 1.0:
        return ld - params.log_lam - params.gamma * lr, ld - 2.0 * lr
    top = ld - 2.0 - math.log(lr)
    return top - params.log_lam, top


def sons(P: Cylinder, params: AdmissibilityParams) -> list:
    """Vertical halves when both are admissible, otherwise base children."""
    if not is_admissible(P, params).ok:
        raise ValueError("sons are defined for admissible cylinders only")
    sr = math.sqrt(P.r)
    down = Cylinder(sr, P.base, P.a / sr)
    up = Cylinder(sr, P.base, P.a * sr)
    if is_admissible(down, params).ok and is_admissible(up, params).ok:
        return [down, up]
    return [Cylinder(P.r, Q, P.a) for Q in P.base.system.children_cubes(P.base)]


class Parents(NamedTuple):
    down: Cylinder
    up: Cylinder
    lr: Cylinder | None


def parents(P: Cylinder, params: AdmissibilityParams) -> Parents:
    """p_down = P_{r^3,Q}(a/r^2), p_up = P_{r^2,Q}(ar), p_lr = P_{r,p(Q)}(a)."""
    if is_admissible(P, params) is not Admissibility.LARGE:
        raise ValueError("parents are defined for large admissible cylinders only")
    r, a, Q = P.r, P.a, P.base
    try:
        lr = Cylinder(r, Q.system.parent_cube(Q), a)
    except WindowError:
        lr = None
    return Parents(Cylinder(r ** 3, Q, a / r ** 2), Cylinder(r ** 2, Q, a * r), lr)


def strip_down(P: Cylinder) -> Cylinder:
    """p_down(P) minus P = P_{r^2,Q}(a/r^3)."""
    return Cylinder(P.r ** 2, P.base, P.a / P.r ** 3)


def strip_up(P: Cylinder) -> Cylinder:
    """p_up(P) minus P = P_{r,Q}(a r^2)."""
    return Cylinder(P.r, P.base, P.a * P.r ** 2)


def envelope(P: Cylinder, C: float) -> Cylinder:
    """P^C = P_{r^C,Q}(a); its measure is C mu(P)."""
    if not C >= 1:
        raise ValueError("envelope factor must be at least 1")
    return Cylinder.from_log(C * P.log_r, P.base, P.a)


class StarEnlargement(NamedTuple):
    cover: Cylinder
    C_star: float
    C4: float
    D: float


def star_constants(system: CubeSystem, mu: FlowMeasure, window: float, samples: int = 200,
                   seed: int = 0, extra=()):
    """(C*, D(mu_N, C*/c), C4) with C* = C1 + sqrt(2) and C4 = 2 D."""
    C_star = system.C1 + math.sqrt(2.0)
    D = estimate_doubling(mu, C_star / system.c, window, samples, seed, extra).D
    return C_star, D, 2.0 * D


def enlargement_star(P: Cylinder, Z: VerticalField, spec=None, D: float | None = None,
                     mu: FlowMeasure | None = None) -> StarEnlargement:
    """Covering cylinder P_{r^2, B(n_Q, C* delta^k)}(a) of {d_Z(., P) < log r}.

    ``D`` is the doubling constant D(mu_N, C*/c); when omitted it is
    estimated on a window around the cube (including the cube's own pair
    of balls).
    """
    if spec is not None and spec != Z.spec:
        raise ValueError("spec does not match the vector field")
    Q = P.cube
    system = Q.system
    C_star = system.C1 + math.sqrt(2.0)
    rad = C_star * system.scale(Q.generation)
    if D is None:
        mu = system.mu if mu is None else mu
        small = system.c * system.scale(Q.generation)
        window = max(1.0, float(norm_N(Z.spec, np.asarray(Q.center))) + rad)
        D = estimate_doubling(mu, C_star / system.c, window, extra=[(np.asarray(Q.center), small)]).D
    cover = Cylinder(P.r ** 2, Ball(Q.center, rad), P.a)
    return StarEnlargement(cover, C_star, 2.0 * D, D)


# sampling ------------------------------------------------------------------

def _sample_base(base, rng, size, spec):
    if isinstance(base, DyadicCube):
        return base.system.sample(base, rng, size)
    if isinstance(base, Ball) and not spec.is_heisenberg:
        g = rng.normal(size=(size, spec.m))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = base.radius * rng.uniform(size=(size, 1)) ** (1.0 / spec.m)
        return np.asarray(base.center) + g * rad
    if isinstance(base, Ball):
        from .cubes import _koranyi_ball_sample

        loc = _koranyi_ball_sample(rng, size, base.radius)
        return base_mul(spec, np.asarray(base.center), loc)
    raise TypeError("cannot sample a sample-only base set")


def sample_cylinder(P: Cylinder, Z: VerticalField, rng, size: int):
    """Points uniform for the right Haar measure, in flow coordinates (n, t)."""
    n = _sample_base(P.base, rng, size, Z.spec)
    lo, hi = U_interval(P)
    t = rng.uniform(lo, hi, size=size)
    return n, t


def cylinder_in_ball_check(P: Cylinder, Z: VerticalField, C3: float, samples: int = 1000,
                           seed: int = 0):
    """Sampled sup of d_Z(x, (n_Q,1)exp(log a Z)) / log r over x in P.

    Returns (passed, ratio) where passed means ratio <= C3.
    """
    rng = np.random.default_rng(seed)
    n, t = sample_cylinder(P, Z, rng, samples)
    c = np.asarray(P.cube.center)
    d = dist_G_array(Z.spec, n, np.exp(t), c, P.a)
    ratio = float(d.max() / P.log_r)
    return ratio <= C3, ratio


def random_admissible(system: CubeSystem, params: AdmissibilityParams, rng, k_range=(-8, 4),
                      kind: str = "any", log_r_max: float = 6.0, cube_spread: int = 4,
                      cubes=None) -> Cylinder:
    """A random admissible cylinder; ``kind`` is "large", "small" or "any"."""
    if cubes is not None:
        Q = cubes[int(rng.integers(len(cubes)))]
    else:
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        if hasattr(system, "cube_from_index"):
            J = rng.integers(-cube_spread, cube_spread, size=system.spec.m)
            Q = system.cube_from_index(k, J)
        else:
            k = min(max(k, system.k_min), system.k_max)
            Q = system.cube(k, int(rng.integers(system.centers[k].shape[0])))
    if kind == "any":
        kind = "large" if rng.uniform() < 0.7 else "small"
    if kind == "large":
        lr = rng.uniform(1.0, log_r_max)
        if lr == 1.0:
            lr = 1.5
    else:
        lr = rng.uniform(0.01, 1.0)
    r = math.exp(lr)
    lo, hi = anchor_range(Q.generation, r, params)
    la = rng.uniform(lo, hi)
    P = Cylinder(r, Q, math.exp(la))
    return P


def product_factorization(P1: Cylinder, P2: Cylinder, Z: VerticalField, n, t):
    """Factor x = (n,1)exp(tZ) of P1 P2's inner cylinder as x1 x2, xi in Pi.

    Abelian base; P1 has a cube base and P2 a ball base centred at 0. The
    inner cylinder is P_{r1 r2, E1 + B(0, R a1/r1)}(a1 a2). Returns flow
    coordinates (n1, t1), (n2, t2).
    """
    spec = Z.spec
    if spec.is_heisenberg:
        raise ValueError("constructive factorization is implemented for abelian bases")
    lo1, hi1 = U_interval(P1)
    lo2, hi2 = U_interval(P2)
    n = np.atleast_2d(np.asarray(n, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    lo = np.maximum(lo1, t - hi2)
    hi = np.minimum(hi1, t - lo2)
    t1 = 0.5 * (lo + hi)
    t2 = t - t1
    blo, bhi = P1.cube.system.bounds(P1.cube)
    # nearest point of the half-open cube, pulled strictly inside
    eps = 1e-12 * (bhi - blo)
    n1 = np.clip(n, blo + eps, bhi - eps)
    n2 = np.exp(-t1)[:, None] * (n - n1)
    return (n1, t1), (n2, t2)


def psi_ball_radius(P: Cylinder, R: float) -> float:
    """Abelian: Psi_{r,a}(B(0,R)) is the ball of radius R a / r."""
    return R * P.a / P.r


def mc_cylinder_measure(P: Cylinder, mu: FlowMeasure, samples: int = 1_000_000, seed: int = 0,
                        strata: int = 256) -> float:
    """Independent Monte Carlo estimate of mu(P) in group coordinates.

    Right Haar measure is dn d(log a); the t-range is split into strata,
    each with a bounding box of the sheared slice, and membership is
    decided through flow coordinates. Abelian cube or ball bases.
    """
    Z = mu.Z
    spec = Z.spec
    if spec.is_heisenberg:
        raise ValueError("Monte Carlo volumes are implemented for abelian bases")
    if isinstance(P.base, DyadicCube):
        blo, bhi = P.base.system.bounds(P.base)
    elif isinstance(P.base, Ball):
        c = np.asarray(P.base.center)
        blo, bhi = c - P.base.radius, c + P.base.radius
    else:
        raise TypeError("unsupported base for Monte Carlo volume")
    rng = np.random.default_rng(seed)
    lo, hi = U_interval(P)
    edges = np.linspace(lo, hi, strata + 1)
    per = max(samples // strata, 1)
    total = 0.0
    for j in range(strata):
        a0, a1 = edges[j], edges[j + 1]
        f0, f1 = flow_base(Z, a0), flow_base(Z, a1)
        box_lo = blo + np.minimum(f0, f1)
        box_hi = bhi + np.maximum(f0, f1)
        vol = float(np.prod(box_hi - box_lo)) * (a1 - a0)
        t = rng.uniform(a0, a1, size=per)
        nx = rng.uniform(box_lo, box_hi, size=(per, spec.m))
        a = np.exp(t)
        inside = contains_array(P, Z, nx, a)
        if not np.any(inside):
            continue
        n0, _ = to_flow_array(Z, nx[inside], a[inside])
        w = base_density(mu, n0)
        total += vol * float(np.sum(w)) / per
    return total


def cylinder_record(P: Cylinder, params: AdmissibilityParams | None = None) -> dict:
    if isinstance(P.base, DyadicCube):
        base = {"system": P.base.system.name, "generation": int(P.base.generation),
                "id": int(P.base.key)}
    elif isinstance(P.base, Ball):
        base = {"center": list(P.base.center), "radius": P.base.radius}
    else:
        base = {"description": P.base.description}
    adm = None
    if params is not None and isinstance(P.base, DyadicCube):
        status = is_admissible(P, params)
        adm = status.value if status.ok else None
    return {"r": P.r, "log_r": P.log_r, "a": P.a, "base": base, "admissible": adm}
