"""Z-flow measures on G and their base measures on N.

A flow measure has density phi(n, a) = psi(n n(log a)^{-1}) with respect to
the right Haar measure dn da/a. Presets: ``"haar"`` (psi = 1) and, for
abelian bases, ``"power:s=<real>"`` with psi(n) = (1 + |n|^2)^(s/2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .group import GroupPoint, VerticalField, norm_N, to_flow_array

__all__ = [
    "FlowMeasure",
    "DoublingData",
    "KORANYI_BALL_CONSTANT",
    "density_at",
    "density_array",
    "base_density",
    "mu_N_of_ball",
    "mu_N_of_box",
    "haar_ball_volume",
    "estimate_doubling",
]

#: Haar volume of the unit Koranyi ball in H^1: |B(R)| = 2 pi^2 R^4.
KORANYI_BALL_CONSTANT = 2.0 * math.pi ** 2


@dataclass(frozen=True)
class FlowMeasure:
    """A flow measure: ``kind`` is "uniform" or "power" (exponent ``s``)."""

    Z: VerticalField
    kind: str = "uniform"
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "power"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "power":
            if self.Z.spec.is_heisenberg:
                raise ValueError("power weights are only available on abelian bases")
            if not self.s > -self.Z.spec.m:
                raise ValueError("power weight needs s > -m to be doubling")
        if self.kind == "uniform":
            object.__setattr__(self, "s", 0.0)

    @property
    def spec(self):
        return self.Z.spec

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    @property
    def preset(self) -> str:
        return "haar" if self.is_uniform else f"power:s={self.s:g}"

    @classmethod
    def from_preset(cls, Z: VerticalField, preset: str) -> "FlowMeasure":
        text = preset.strip().lower()
        if text in ("haar", "uniform", "rho"):
            return cls(Z, "uniform")
        if text.startswith("power"):
            rest = text[len("power"):].lstrip(":")
            if rest.startswith("s="):
                rest = rest[2:]
            try:
                s = float(rest)
            except ValueError as exc:
                raise ValueError(f"cannot parse measure preset {preset!r}") from exc
            return cls(Z, "power", s)
        raise ValueError(f"unknown measure preset {preset!r}")


@dataclass(frozen=True)
class DoublingData:
    C: float
    D: float
    window: float
    samples: int


def base_density(mu: FlowMeasure, n) -> np.ndarray:
    """psi(n), the density of mu_N with respect to Haar measure on N."""
    n = np.asarray(n, dtype=np.float64)
    if mu.is_uniform:
        return np.ones(n.shape[:-1])
    r2 = np.sum(n * n, axis=-1)
    return (1.0 + r2) ** (0.5 * mu.s)


def density_array(mu: FlowMeasure, n, a) -> np.ndarray:
    n0, _ = to_flow_array(mu.Z, n, a)
    return base_density(mu, n0)


def density_at(mu: FlowMeasure, x: GroupPoint) -> float:
    x.check(mu.spec)
    return float(density_array(mu, x.n_array, x.a))


def haar_ball_volume(spec, radius: float) -> float:
    """Haar volume of a d_N ball (Euclidean or Koranyi)."""
    if spec.is_heisenberg:
        return KORANYI_BALL_CONSTANT * radius ** 4
    m = spec.m
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0) * radius ** m


def _sphere_area(k: int) -> float:
    """Surface area of the unit sphere S^k in R^{k+1}."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def _power_ball(s: float, m: int, c: float, R: float, rtol: float) -> float:
    # psi depends on |n| only; integrate in polar coordinates about the center
    # with phi the angle to the center direction
    if m == 1:
        return _power_interval(s, c - R, c + R, rtol)
    if c == 0.0:
        g = lambda rho: rho ** (m - 1) * (1.0 + rho * rho) ** (0.5 * s)
        val, _ = integrate.quad(g, 0.0, R, epsrel=rtol, epsabs=0.0)
        return _sphere_area(m - 1) * val
    area = _sphere_area(m - 2) if m > 2 else 2.0
    # the angular integrand is analytic; a fixed Gauss-Legendre rule suffices
    x, w = np.polynomial.legendre.leggauss(96)
    phi = 0.5 * math.pi * (x + 1.0)
    w = 0.5 * math.pi * w * np.sin(phi) ** (m - 2)
    cphi = np.cos(phi)

    def radial(rho):
        r2 = c * c + rho * rho + 2.0 * c * rho * cphi
        return rho ** (m - 1) * float(np.dot(w, (1.0 + r2) ** (0.5 * s)))

    pts = [c] if 0.0 < c < R else None
    val, _ = integrate.quad(radial, 0.0, R, epsrel=rtol, epsabs=0.0, points=pts, limit=200)
    return area * val


def _primitive_1d(s: float, x: float) -> float:
    # antiderivative of (1 + x^2)^(s/2)
    return x * special.hyp2f1(0.5, -0.5 * s, 1.5, -x * x)


def _power_interval(s: float, lo: float, hi: float, rtol: float = 1e-10) -> float:
    if s == 0.0:
        return hi - lo
    if max(abs(lo), abs(hi)) < 1e3:
        val = _primitive_1d(s, hi) - _primitive_1d(s, lo)
        if math.isfinite(val) and val > 0:
            return val
    f = lambda x: (1.0 + x * x) ** (0.5 * s)
    pts = [0.0] if lo < 0.0 < hi else None
    val, _ = integrate.quad(f, lo, hi, epsrel=rtol, epsabs=0.0, points=pts, limit=200)
    return val


@lru_cache(maxsize=200_000)
def _power_box_cached(s: float, lo: tuple, hi: tuple, rtol: float) -> float:
    m = len(lo)
    if m == 1:
        return _power_interval(s, lo[0], hi[0], rtol)
    f = lambda *x: (1.0 + sum(v * v for v in x)) ** (0.5 * s)
    if m == 2:
        val, _ = integrate.dblquad(
            lambda y, x: f(x, y), lo[0], hi[0], lo[1], hi[1], epsrel=rtol, epsabs=0.0
        )
        return val
    val, _ = integrate.nquad(f, list(zip(lo, hi)), opts={"epsrel": rtol, "epsabs": 0.0})
    return val


def mu_N_of_box(mu: FlowMeasure, lo, hi, rtol: float = 1e-10) -> float:
    """mu_N of an axis-parallel box in R^m."""
    if mu.spec.is_heisenberg:
        raise ValueError("boxes are only defined for abelian bases")
    lo = tuple(float(v) for v in np.ravel(lo))
    hi = tuple(float(v) for v in np.ravel(hi))
    if mu.is_uniform:
        return float(np.prod(np.subtract(hi, lo)))
    return _power_box_cached(float(mu.s), lo, hi, rtol)


def mu_N_of_ball(mu: FlowMeasure, center, radius: float, rtol: float = 1e-6) -> float:
    """mu_N(B_N(center, radius))."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    spec = mu.spec
    if mu.is_uniform:
        return haar_ball_volume(spec, radius)
    c = float(np.linalg.norm(np.asarray(center, dtype=np.float64)))
    return _power_ball(float(mu.s), spec.m, c, float(radius), rtol)


def estimate_doubling(
    mu: FlowMeasure,
    C: float,
    window: float,
    samples: int = 200,
    seed: int = 0,
    extra=(),
) -> DoublingData:
    """Empirical sup of mu_N(B(x, C r)) / mu_N(B(x, r)) on a window.

    Centers are uniform in the window ball, radii log-uniform in
    [1e-3 window, window]; ``extra`` adds explicit (center, radius) pairs.
    The same samples are used for every C, so the result is monotone in C.
    """
    if not C >= 1:
        raise ValueError("doubling ratio must be >= 1")
    if samples < 1:
        raise ValueError("need at least one sample")
    if not window > 0 or not math.isfinite(window):
        raise ValueError("degenerate window")
    spec = mu.spec
    if C == 1:
        return DoublingData(1.0, 1.0, float(window), int(samples))
    rng = np.random.default_rng(seed)
    d = spec.dim
    pairs = list(extra)
    if mu.is_uniform:
        # translation invariance: the ratio does not depend on the center
        D = max(haar_ball_volume(spec, C) / haar_ball_volume(spec, 1.0), 1.0)
        return DoublingData(float(C), float(D), float(window), int(samples))
    centers = rng.uniform(-window, window, size=(samples, d))
    keep = norm_N(spec, centers) <= window
    centers = centers[keep]
    radii = window * np.exp(rng.uniform(math.log(1e-3), 0.0, size=centers.shape[0]))
    pairs.extend(zip(centers, radii))
    D = 1.0
    for c, r in pairs:
        D = max(D, mu_N_of_ball(mu, c, C * r) / mu_N_of_ball(mu, c, r))
    return DoublingData(float(C), float(D), float(window), int(samples))
