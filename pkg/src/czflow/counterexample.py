"""Flow metric comparisons and the extended Heisenberg counterexample.

On abelian bases d_Z and d_G are comparable at the cosh level with
D = max(2|beta|^2 + 1, 2). On H^1 x R_+ with Z = H + X_alpha the cylinders
of the dyadic family are not comparable with balls: the table produced by
:func:`counterexample_table` carries, in log space, the chain of explicit
lower bounds for the diameter of the cylinders P^l and for the measure
ratio of their R-neighbourhoods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .cubes import _koranyi_ball_sample
from .cylinders import Ball, Cylinder, U_interval, sample_cylinder
from .group import (
    GroupSpec,
    VerticalField,
    dist_G_array,
    from_flow_array,
    norm_N,
    psi_t,
    to_flow_array,
)

__all__ = [
    "C_TILDE",
    "HeisenbergBox",
    "psi_box_image",
    "box_in_psi_image",
    "box_sandwich_check",
    "psi_ball_inclusion",
    "verify_small_ball_in_cylinder",
    "verify_thickened_cylinder",
    "psi_intersection_check",
    "CounterexampleRow",
    "counterexample_table",
    "diameter_chain",
    "halvings",
    "strip_exponents",
    "abelian_equivalence_certificate",
    "phi_beta",
    "format_log10",
]

#: c~ with c~^4 = 1/20: Q(2 c~ L) lies in the Koranyi ball of radius L.
C_TILDE = 20.0 ** -0.25


@dataclass(frozen=True)
class HeisenbergBox:
    """Q(L, M) = [-L, L]^2 x [-M, M]; Q(L) = Q(L, L^2)."""

    L: float
    M: float | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("box half-width must be positive")
        if self.M is None:
            object.__setattr__(self, "M", self.L * self.L)
        if not self.M > 0:
            raise ValueError("box height must be positive")

    def contains(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        return (np.abs(n[..., 0]) <= self.L) & (np.abs(n[..., 1]) <= self.L) & (np.abs(n[..., 2]) <= self.M)

    def corners(self) -> np.ndarray:
        s = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=np.float64)
        return s * np.array([self.L, self.L, self.M])

    def sample(self, rng, size: int) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(size, 3)) * np.array([self.L, self.L, self.M])


def _heis_Z() -> VerticalField:
    return VerticalField(GroupSpec.heisenberg(), np.array([1.0, 0.0]))


def psi_box_image(t: float, L: float) -> HeisenbergBox:
    """Smallest box containing psi_t(Q(L)): Q(e^t L, e^{2t} L^2 + e^t |1 - e^t| L)."""
    if not L > 0:
        raise ValueError("L must be positive")
    et = math.exp(t)
    return HeisenbergBox(et * L, et * et * L * L + et * abs(1.0 - et) * L)


def box_in_psi_image(t: float, L: float, inner: HeisenbergBox) -> bool:
    """Exact test of inner ⊂ psi_t(Q(L)) for Z = H + X_alpha.

    psi_t(q, p, tau) = (e^t q, e^t p, e^{2t} tau + e^t (e^t - 1) q), so the
    preimage of inner is a sheared box and the test reduces to its corners.
    """
    et = math.exp(t)
    s = et - 1.0
    return inner.L <= et * L * (1 + 1e-15) and inner.M + abs(s) * inner.L <= et * et * L * L * (1 + 1e-15)


def box_sandwich_check(L: float, samples: int = 100_000, seed: int = 0) -> dict:
    """Rejection sampling of Q(2 c~ L) ⊂ B(1, L) ⊂ Q(2 L)."""
    rng = np.random.default_rng(seed)
    spec = GroupSpec.heisenberg()
    inner = HeisenbergBox(2.0 * C_TILDE * L)
    pts = inner.sample(rng, samples)
    inner_out = int(np.count_nonzero(norm_N(spec, pts) > L * (1 + 1e-12)))
    ball = _koranyi_ball_sample(rng, samples, L)
    outer_out = int(np.count_nonzero(~HeisenbergBox(2.0 * L).contains(ball)))
    # tightness: the corner of Q(2 c~ L) sits on the sphere
    corner = norm_N(spec, inner.corners()).max() / L
    return {"L": L, "inner_escapes": inner_out, "outer_escapes": outer_out, "corner_ratio": float(corner)}


def psi_ball_inclusion(t: float, R: float, samples: int = 20_000, seed: int = 0) -> float:
    """Fraction of sampled points of B(1, c~ e^t R) outside psi_t(B(1, R))."""
    rng = np.random.default_rng(seed)
    Z = _heis_Z()
    y = _koranyi_ball_sample(rng, samples, C_TILDE * math.exp(t) * R)
    pre = psi_t(-t, y, Z)
    return float(np.mean(norm_N(Z.spec, pre) >= R))


# ball and cylinder inclusions----------------------------------------------------

def verify_small_ball_in_cylinder(R: float, Z: VerticalField, samples: int = 10_000, seed: int = 0):
    """Sampled check of P_{e^{R/(2|Z|)}, B_N(1, R/2)}(1) ⊂ B_G(1, R).

    Returns (holds, max d_G(x, 1) / R).
    """
    if not R > 0:
        raise ValueError("R must be positive")
    spec = Z.spec
    P = Cylinder(math.exp(R / (2.0 * Z.norm)), Ball(tuple(np.zeros(spec.dim)), R / 2.0), 1.0)
    rng = np.random.default_rng(seed)
    n, t = sample_cylinder(P, Z, rng, samples)
    gn, ga = from_flow_array(Z, n, t)
    d = dist_G_array(spec, gn, ga, np.zeros(spec.dim), 1.0)
    ratio = float(d.max() / R)
    return ratio < 1.0, ratio


def psi_intersection_check(r: float, a: float, R: float, r0: float, samples: int = 2000,
                           grid: int = 64, seed: int = 0) -> float:
    """Fraction of sampled points of B(1, C' a R) outside psi_t(B(1, R/2)) for some grid t in U_r(a).

    C' = c~ / (2 r0^2).
    """
    Z = _heis_Z()
    rng = np.random.default_rng(seed)
    rad = C_TILDE / (2.0 * r0 * r0) * a * R
    y = _koranyi_ball_sample(rng, samples, rad)
    lo, hi = math.log(a / r), math.log(a * r)
    bad = np.zeros(samples, dtype=bool)
    for t in np.linspace(lo, hi, grid):
        bad |= norm_N(Z.spec, psi_t(-t, y, Z)) >= R / 2.0
    return float(bad.mean())


def verify_thickened_cylinder(P: Cylinder, R: float, Z: VerticalField, r0: float | None = None,
                              samples: int = 2000, reference: int = 20_000, seed: int = 0):
    """Sampled check that the thickened cylinder lies in {x : d_G(x, P) < R}.

    The base n_Q Psi_{r,a}(B(1, R/2)) is replaced by the ball B(n_Q, C' a R),
    C' = c~ / (2 r0^2) (r0 defaults to sqrt(r)). Distances to P are bounded
    above by the best of a cloud of sampled points of P and the point of P
    over n_Q at the nearest height. Returns (holds, max distance / R).
    """
    spec = Z.spec
    if not spec.is_heisenberg:
        raise ValueError("the thickened cylinder is built on H^1")
    r, a = P.r, P.a
    r0 = math.sqrt(r) if r0 is None else r0
    nQ = np.asarray(P.cube.center, dtype=np.float64)
    rad = C_TILDE / (2.0 * r0 * r0) * a * R
    big = Cylinder(r * math.exp(R / (2.0 * Z.norm)), Ball(tuple(nQ), rad), a)
    rng = np.random.default_rng(seed)
    n, t = sample_cylinder(big, Z, rng, samples)
    xn, xa = from_flow_array(Z, n, t)
    lo, hi = U_interval(P)
    eps = 1e-9 * (hi - lo)
    tc = np.clip(t, lo + eps, hi - eps)
    yn, ya = from_flow_array(Z, np.broadcast_to(nQ, n.shape), tc)
    best = dist_G_array(spec, xn, xa, yn, ya)
    pn, pt = sample_cylinder(P, Z, rng, reference)
    qn, qa = from_flow_array(Z, pn, pt)
    for i in range(0, samples, 256):
        sl = slice(i, i + 256)
        d = dist_G_array(spec, xn[sl, None, :], xa[sl, None], qn[None, :, :], qa[None, :])
        best[sl] = np.minimum(best[sl], d.min(axis=1))
    ratio = float(best.max() / R)
    return ratio < 1.0, ratio


# counterexample bookkeeping ------------------------------------------------------

def halvings(ell: int) -> int:
    """floor(l log2 3) + l + 2 vertical halvings of the l-th strip."""
    return _floor_log2_3(ell) + ell + 2


def _floor_log2_3(ell: int) -> int:
    # exact: largest j with 2^j <= 3^l
    return (3 ** ell).bit_length() - 1


def strip_exponents(ell_max: int):
    """Alternating ascent from P_{r0,Q}(1) in units of log r0.

    Returns, for each l, (radius exponent, anchor exponent) of the strip
    p_down(P) minus P created at the l-th p_down step.
    """
    e, alpha = Fraction(1), Fraction(0)
    out = []
    while len(out) <= ell_max:
        e, alpha = 2 * e, alpha + e  # p_up
        out.append((2 * e, alpha - 3 * e))  # strip of p_down
        e, alpha = 3 * e, alpha - 2 * e  # p_down
    return out


def format_log10(log10_value: float, digits: int = 12) -> str:
    """Decimal scientific string of 10**log10_value without overflow."""
    expo = math.floor(log10_value)
    mant = 10.0 ** (log10_value - expo)
    if mant >= 10.0:
        mant /= 10.0
        expo += 1
    return f"{mant:.{digits - 1}f}e{expo:+d}"


@dataclass(frozen=True)
class CounterexampleRow:
    ell: int
    log_r0_r: float
    log_a_low: float
    log_a_high: float
    log_delta_k_low: float
    log_delta_k_high: float
    log_diam_lb: float
    diam_lb: float
    log_ratio_lb: dict
    strip_radius_exp: int
    strip_anchor_exp: int
    halvings: int

    @property
    def a_low(self) -> str:
        return format_log10(self.log_a_low / math.log(10.0))

    @property
    def a_high(self) -> str:
        return format_log10(self.log_a_high / math.log(10.0))

    def csv_fields(self, K: float = 1.0) -> list:
        return [str(self.ell), f"{self.log_r0_r:#.12g}", self.a_low, self.a_high,
                f"{self.log_diam_lb:#.12g}", f"{self.log_ratio_lb[K]:#.12g}"]


CSV_HEADER = ["ell", "log_r0_r", "a_low", "a_high", "log_diam_lb", "log_ratio_lb_at_K1"]


def _log_arccosh_exp(y: float) -> float:
    # arccosh(e^y) for y > 0
    return y + math.log1p(math.sqrt(-math.expm1(-2.0 * y)))


def diameter_chain(ell: int, r0: float, c: float) -> list:
    """Logs of the successive lower bounds for cosh diam P^l (non-increasing).

    Worst case over the admissible box: a = a_high = r / r0^E and
    delta^k = a r^2, with E = 4 6^l and r = r0^{e_l}.
    """
    L = math.log(r0)
    E = 4 * 6 ** ell
    e_l = 3 ** ell / 2 ** _floor_log2_3(ell)
    log_r = e_l * L
    log_a = log_r - E * L
    one_minus_a = -math.expm1(log_a)
    eps = math.exp(log_a)
    # Koranyi norm^2 of (c delta^k, 0, c delta^k (1 - a)) over 2 a^2
    term_q = 4.0 * math.log(c) + 8.0 * log_r - math.log(16.0)
    term_t = 2.0 * math.log(c) + 4.0 * log_r + 2.0 * math.log(one_minus_a) - 2.0 * log_a
    big = max(term_q, term_t)
    log_koranyi = math.log(0.5) + 0.5 * (big + math.log(math.exp(term_q - big) + math.exp(term_t - big)))
    log_cosh = log_koranyi + math.log1p(math.exp(-log_koranyi))
    log_linear = math.log(c / 2.0) + 2.0 * log_r + math.log(one_minus_a) - log_a
    log_eps = math.log(c / 2.0) + 2.0 * log_r - log_a + math.log1p(-eps)
    log_final = E * L + e_l * L + math.log(c / 2.0) + math.log1p(-eps)
    log_target = E * L + math.log1p(-eps)
    return [log_cosh, log_koranyi, log_linear, log_eps, log_final, log_target]


def counterexample_table(r0: float = math.e ** 2, ell_max: int = 4, K_grid=(1.0,), c: float | None = None,
                         C1: float | None = None, lam: float = 2.1 * math.e ** 3, gamma: float = 5.0):
    """Rows l = 0..ell_max of the counterexample bookkeeping, in log space.

    ``c`` and ``C1`` are the inner-ball and doubling constants of the H^1
    cube system; by default those of the standard net system.
    """
    if not r0 > math.e:
        raise ValueError("r0 must exceed e")
    if not 0 <= ell_max <= 6:
        raise ValueError("ell_max must lie in 0..6")
    if any(not K > 0 for K in K_grid):
        raise ValueError("K must be positive")
    if c is None or C1 is None:
        dc, dC1 = default_heisenberg_constants()
        c = dc if c is None else c
        C1 = dC1 if C1 is None else C1
    L = math.log(r0)
    Cp = C_TILDE / (2.0 * r0 * r0)
    strips = strip_exponents(ell_max)
    rows = []
    for ell in range(ell_max + 1):
        E = 4 * 6 ** ell
        rad, anc = strips[ell]
        if rad != E or not (anc - rad < -E < anc + rad):
            raise ArithmeticError("strip bookkeeping does not match the construction")
        e_l = 3 ** ell / 2 ** _floor_log2_3(ell)
        log_r = e_l * L
        la_lo, la_hi = -E * L - log_r, -E * L + log_r
        chain = diameter_chain(ell, r0, c)
        log_cosh = chain[0]
        diam = _log_arccosh_exp(log_cosh)
        ratios = {}
        for K in K_grid:
            R = K * diam
            num = math.log(R / (2.0 * math.sqrt(2.0)) + L) + 4.0 * math.log(Cp * R)
            den = math.log(2.0 * L) + 4.0 * math.log(C1) + 4.0 * math.log(lam) + 8.0 * gamma * L
            ratios[float(K)] = num - den
        rows.append(CounterexampleRow(
            ell=ell, log_r0_r=e_l, log_a_low=la_lo, log_a_high=la_hi,
            log_delta_k_low=la_lo + 2.0 * log_r,
            log_delta_k_high=math.log(lam) + la_hi + gamma * log_r,
            log_diam_lb=log_cosh, diam_lb=diam, log_ratio_lb=ratios,
            strip_radius_exp=int(rad), strip_anchor_exp=int(anc), halvings=halvings(ell)))
    return rows


@lru_cache(maxsize=1)
def default_heisenberg_constants():
    """(c, C1) of the default H^1 net system."""
    from .cubes import HeisenbergNetSystem
    from .measure import FlowMeasure

    system = HeisenbergNetSystem(FlowMeasure(_heis_Z()), window=8.0, generations=(-2, -1))
    return system.c, system.C1


# abelian comparison ----------------------------------------------------------

def phi_beta(v, beta) -> np.ndarray:
    """(1 + |v|^2) / (1 + |v + beta|^2)."""
    v = np.asarray(v, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    return (1.0 + np.sum(v * v, axis=-1)) / (1.0 + np.sum((v + b) ** 2, axis=-1))


def abelian_equivalence_certificate(beta, samples: int = 10_000, seed: int = 0, log_a_range: float = 6.0,
                                    spread: float = 50.0, annuli: int = 8) -> dict:
    """Check cosh d_Z(x,1) <= D cosh d_G(x,1) and back with D = max(2|beta|^2 + 1, 2)."""
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    m = beta.shape[0]
    spec = GroupSpec.abelian(m)
    Z = VerticalField(spec, beta)
    b2 = float(beta @ beta)
    D = max(2.0 * b2 + 1.0, 2.0)
    rng = np.random.default_rng(seed)
    la = rng.uniform(-log_a_range, log_a_range, size=samples)
    a = np.exp(la)
    scale = np.exp(rng.uniform(-3.0, math.log(spread), size=(samples, 1)))
    n = rng.normal(size=(samples, m)) * scale
    # include points on the flow line through the identity, where d_Z is smallest
    k = samples // 4
    n[:k] = (a[:k, None] - 1.0) * beta * rng.uniform(0.5, 1.5, size=(k, 1))
    zero = np.zeros(m)
    dG = dist_G_array(spec, n, a, zero, 1.0)
    n1, _ = to_flow_array(Z, n, a)
    dZ = dist_G_array(spec, n1, a, zero, 1.0)
    # cosh at the level of (1 + a^2 + |n|^2) / (2a) avoids overflow
    cG = (1.0 + a * a + np.sum(n * n, axis=1)) / (2.0 * a)
    cZ = (1.0 + a * a + np.sum(n1 * n1, axis=1)) / (2.0 * a)
    upper = int(np.count_nonzero(cZ > D * cG * (1 + 1e-12)))
    lower = int(np.count_nonzero(cG > D * cZ * (1 + 1e-12)))
    edges = np.quantile(dG, np.linspace(0.0, 1.0, annuli + 1))
    ratio = np.where(dZ > 0, dG / np.where(dZ > 0, dZ, 1.0), 1.0)
    bands = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (dG >= lo) & (dG <= hi) & (dZ > 0)
        if np.any(sel):
            bands.append({"dG_low": float(lo), "dG_high": float(hi),
                          "ratio_min": float(ratio[sel].min()), "ratio_max": float(ratio[sel].max())})
    v = np.linspace(-10.0, 10.0, 2001)
    if m == 1:
        grid = v[:, None]
    else:
        grid = rng.uniform(-10.0, 10.0, size=(20_000, m))
    ph = phi_beta(grid, beta)
    return {
        "beta": beta.tolist(),
        "D": D,
        "samples": samples,
        "upper_violations": upper,
        "lower_violations": lower,
        "max_dG_minus_dZ": float(np.max(np.abs(dG - dZ))),
        "annuli": bands,
        "phi_min": float(ph.min()),
        "phi_max": float(ph.max()),
        "phi_at_zero": float(phi_beta(np.zeros(m), beta)),
        "ok": upper == 0 and lower == 0,
    }
