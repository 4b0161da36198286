"""Maximal operators, the CZ decomposition and the covering lemma.

Functions are finite combinations of indicators of family cylinders. Two
cylinders of one family are nested or disjoint, so every integral of such
a function over a family cylinder, or over any cylinder with a cube base
of the same cube system, is an exact finite sum (no quadrature).
"""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .cubes import DyadicCube, WindowError
from .cylinders import (
    AdmissibilityParams,
    Cylinder,
    U_interval,
    anchor_range,
    contains_flow,
    cylinder_measure,
    envelope,
    intersects,
    sample_cylinder,
    star_constants,
)
from .family import DyadicFamily, FamilyNode
from .group import GroupPoint, to_flow_array
from .kernels import pl_interval_max
from .measure import base_density, mu_N_of_ball

__all__ = [
    "SimpleFunction",
    "DecompositionReport",
    "dyadic_maximal",
    "dyadic_maximal_flow",
    "cz_decompose",
    "HLCatalog",
    "hl_maximal",
    "hl_maximal_flow",
    "greedy_cover",
    "verify_cover",
    "envelope_inclusion",
    "weak11_campaign",
    "random_simple_function",
    "alpha_grid",
]


class SimpleFunction:
    """f = sum_i c_i chi_{P_i} with P_i nodes of one dyadic family."""

    def __init__(self, family: DyadicFamily, terms):
        self.family = family
        acc = defaultdict(float)
        nodes = {}
        for c, node in terms:
            if not isinstance(node, FamilyNode):
                raise TypeError("terms must reference family nodes")
            acc[node.uid] += float(c)
            nodes[node.uid] = node
        self.terms = [(acc[u], nodes[u]) for u in sorted(acc) if acc[u] != 0.0]
        self._coef = {nd.uid: c for c, nd in self.terms}
        self._build()

    def _build(self):
        fam = self.family
        self._anc = {}
        for _, nd in self.terms:
            self._anc[nd.uid] = {a.uid for a in fam.ancestors(nd, include_self=False)}
        uids = set(self._coef)
        # nearest term ancestor and value along the tree
        self._value = {}
        self._maxdesc = defaultdict(list)
        for c, nd in sorted(self.terms, key=lambda ct: ct[1].gen):
            above = [u for u in self._anc[nd.uid] if u in uids]
            self._value[nd.uid] = math.fsum([c] + [self._coef[u] for u in above])
            if above:
                nearest = max(above, key=lambda u: fam.node(u).gen)
                self._maxdesc[nearest].append(nd)
        self._atom_measure = {}
        for _, nd in self.terms:
            inner = [fam.measure(d) for d in self._maxdesc[nd.uid]]
            self._atom_measure[nd.uid] = fam.measure(nd) - math.fsum(inner)

    # structure ------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def max_gen(self) -> int:
        return max((nd.gen for _, nd in self.terms), default=self.family.root.gen)

    def atoms(self):
        """(node, value, measure) of the regions T minus its inner terms."""
        return [(nd, self._value[nd.uid], self._atom_measure[nd.uid]) for _, nd in self.terms]

    def sup_abs(self) -> float:
        vals = [abs(v) for _, v, m in self.atoms() if m > 0]
        return max(vals, default=0.0)

    def norm1(self) -> float:
        return math.fsum(abs(v) * m for _, v, m in self.atoms())

    def norm1_refined(self, max_nodes: int = 2_000_000) -> float:
        """||f||_1 by uniform refinement down to the finest term generation."""
        if self.is_zero:
            return 0.0
        fam = self.family
        uids = set(self._coef)
        tops = [nd for _, nd in self.terms if not (self._anc[nd.uid] & uids)]
        g = self.max_gen
        parts = []
        count = 0
        stack = [(nd, self._coef[nd.uid]) for nd in tops]
        while stack:
            nd, val = stack.pop()
            if nd.gen == g:
                parts.append(abs(val) * fam.measure(nd))
                continue
            for ch in fam.children(nd):
                count += 1
                if count > max_nodes:
                    raise MemoryError("refinement exceeds the node budget")
                stack.append((ch, val + self._coef.get(ch.uid, 0.0)))
        return math.fsum(parts)

    # integrals -----------------------------------------------------------
    def _inside(self, node: FamilyNode):
        """Term nodes contained in ``node`` (itself included)."""
        # live check: extend_up adds ancestors after the cache was built
        return [nd for _, nd in self.terms if self.family.is_ancestor(node, nd)]

    def value_on(self, node: FamilyNode) -> float:
        """Value of f on the part of ``node`` not covered by terms inside it."""
        vals = [c for c, nd in self.terms
                if nd.uid != node.uid and nd.uid in {a.uid for a in self.family.ancestors(node, False)}]
        own = self._coef.get(node.uid, 0.0)
        return math.fsum(vals + [own])

    def integral(self, node: FamilyNode, absolute: bool = False) -> float:
        """Exact integral of f (or |f|) over a family cylinder."""
        fam = self.family
        anc = {a.uid for a in fam.ancestors(node, include_self=False)}
        outer = math.fsum(c for c, nd in self.terms if nd.uid in anc)
        inside = self._inside(node)
        if not absolute:
            return math.fsum([outer * fam.measure(node)] + [c * fam.measure(nd) for c, nd in self.terms
                                                             if nd in inside])
        # |f| on node: the part outside inner terms carries the outer value
        inner_uids = {nd.uid for nd in inside}
        maximal = [nd for nd in inside if not (self._anc[nd.uid] & inner_uids)]
        free = fam.measure(node) - math.fsum(fam.measure(nd) for nd in maximal)
        parts = [abs(outer) * free]
        parts += [abs(self._value[nd.uid]) * self._atom_measure[nd.uid] for nd in inside]
        return math.fsum(parts)

    def average(self, node: FamilyNode, absolute: bool = True) -> float:
        return self.integral(node, absolute) / self.family.measure(node)

    def integral_cylinder(self, P: Cylinder, absolute: bool = True) -> float:
        """Exact integral over any cylinder whose base is a cube of the same system."""
        total = []
        for _, nd in self.terms:
            v = self._value[nd.uid] if absolute else None
            if absolute:
                w = abs(v)
                total.append(w * _overlap(P, nd.cyl))
                total.extend(-w * _overlap(P, d.cyl) for d in self._maxdesc[nd.uid])
            else:
                total.append(self._coef[nd.uid] * _overlap(P, nd.cyl))
        return math.fsum(total)

    # pointwise -------------------------------------------------------------
    def value_flow(self, n, t) -> np.ndarray:
        """f at points given in flow coordinates; 0 off the family window."""
        n = np.atleast_2d(np.asarray(n, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros(t.shape[0])
        if self.is_zero:
            return out
        paths = self.family.paths_flow(n, t, self.max_gen)
        for uids in paths:
            for u, c in self._coef.items():
                out[uids == u] += c
        return out

    def value_at(self, x: GroupPoint) -> float:
        n, t = to_flow_array(self.family.Z, x.n_array, x.a)
        return float(self.value_flow(n[None, :], np.array([t]))[0])

    def sample_support(self, rng, size: int):
        """Points in the union of term cylinders, size split by term."""
        if self.is_zero:
            raise ValueError("zero function has empty support")
        per = max(size // len(self.terms), 1)
        ns, ts = [], []
        for _, nd in self.terms:
            n, t = sample_cylinder(nd.cyl, self.family.Z, rng, per)
            ns.append(n)
            ts.append(t)
        return np.concatenate(ns), np.concatenate(ts)

    def describe(self) -> list:
        ids = self.family.numbering(self.max_gen)
        return [{"coef": c, "node": ids.get(nd.uid, nd.uid), "generation": nd.gen} for c, nd in self.terms]


def _overlap(P: Cylinder, T: Cylinder) -> float:
    lo1, hi1 = U_interval(P)
    lo2, hi2 = U_interval(T)
    length = min(hi1, hi2) - max(lo1, lo2)
    if length <= 0:
        return 0.0
    return P.base.system.intersect_measure(P.base, T.base) * length


# dyadic maximal function -------------------------------------------------

def dyadic_maximal_flow(F: DyadicFamily, f: SimpleFunction, n, t, absolute: bool = True) -> np.ndarray:
    """sup over family cylinders P containing the point of the average of |f| over P.

    With ``absolute=False`` the supremum of |average of f| is returned.
    Above the root every average is smaller than at the root and below the
    finest term generation averages are constant, so the stored chain is
    exhaustive.
    """
    n = np.atleast_2d(np.asarray(n, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.zeros(t.shape[0])
    if f.is_zero:
        return out
    paths = F.paths_flow(n, t, max(f.max_gen, F.root.gen))
    if np.any(paths[0] < 0):
        raise WindowError("point outside the family window")
    cache = {}
    for uids in paths:
        for u in np.unique(uids[uids >= 0]):
            if u not in cache:
                val = f.average(F.node(int(u)), absolute)
                cache[u] = abs(val)
            sel = uids == u
            out[sel] = np.maximum(out[sel], cache[u])
    return out


def dyadic_maximal(F: DyadicFamily, f: SimpleFunction, x: GroupPoint, absolute: bool = True) -> float:
    n, t = to_flow_array(F.Z, x.n_array, x.a)
    return float(dyadic_maximal_flow(F, f, n[None, :], np.array([t]), absolute)[0])


# CZ decomposition ----------------------------------------------------------

@dataclass
class DecompositionReport:
    alpha: float
    stopping: list
    g: SimpleFunction
    bad: list
    bounds: dict
    certificates: dict
    margins: dict
    constants: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.certificates.values())

    def to_dict(self) -> dict:
        F = self.g.family
        ids = F.numbering(max([nd.gen for nd in self.stopping] + [self.g.max_gen]))
        return {
            "alpha": self.alpha,
            "stopping": [{"id": ids.get(nd.uid), "generation": nd.gen, "r": nd.cyl.r, "a": nd.cyl.a,
                          "cube": nd.cyl.base.key, "measure": F.measure(nd)} for nd in self.stopping],
            "bounds": self.bounds,
            "certificates": self.certificates,
            "margins": self.margins,
            "constants": self.constants,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def _rel_le(x, y, tol=1e-12):
    return x <= y + tol * max(1.0, abs(y))


def cz_decompose(F: DyadicFamily, f: SimpleFunction, alpha: float, D: float | None = None,
                 max_extend: int = 40, zero_tol: float = 1e-10) -> DecompositionReport:
    """Stop at maximal family cylinders whose |f|-average exceeds alpha.

    The root chain is grown upwards until the root average is at most
    alpha. ``D`` is the doubling constant D(mu_N, C*/c) entering
    C4 = 2D; it is estimated when omitted.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if f.family is not F:
        raise ValueError("function and family differ")
    system = F.system
    C1 = system.C1
    norm = f.norm1()
    stops = []
    if not f.is_zero:
        ext = 0
        while f.average(F.root) > alpha:
            if ext >= max_extend:
                raise WindowError("root average stays above alpha")
            F.extend_up()
            ext += 1
        stack = [F.root]
        gmax = f.max_gen
        while stack:
            nd = stack.pop()
            A = f.integral(nd, absolute=True)
            if A <= 0.0:
                continue
            if A / F.measure(nd) > alpha:
                stops.append(nd)
            elif nd.gen < gmax:
                stack.extend(reversed(F.children(nd)))
        stops.sort(key=lambda nd: (nd.gen, nd.uid))
    bad, avgs = [], []
    removed = set()
    for P in stops:
        inside = f._inside(P)
        removed.update(nd.uid for nd in inside)
        avg = f.integral(P) / F.measure(P)
        avgs.append(avg)
        outer = f.value_on(P) - f._coef.get(P.uid, 0.0)
        terms = [(outer - avg, P)] + [(f._coef[nd.uid], nd) for nd in inside]
        bad.append(SimpleFunction(F, terms))
    g_terms = [(c, nd) for c, nd in f.terms if nd.uid not in removed]
    for P, avg in zip(stops, avgs):
        g_terms.append((avg - (f.value_on(P) - f._coef.get(P.uid, 0.0)), P))
    g = SimpleFunction(F, g_terms)

    sup_g = g.sup_abs()
    bad_norms = [b.norm1() for b in bad]
    means = [b.integral(P) for b, P in zip(bad, stops)]
    mean_ok = all(abs(mu) <= zero_tol * max(1.0, nb) for mu, nb in zip(means, bad_norms))
    support_ok = all(all(nd.uid == P.uid or F.is_ancestor(P, nd) for _, nd in b.terms)
                     for b, P in zip(bad, stops))
    sum_bad = math.fsum(bad_norms)
    sum_mu = math.fsum(F.measure(P) for P in stops)
    C_star = C1 + math.sqrt(2.0)
    if D is None:
        extra = [(np.asarray(P.cyl.base.center), system.c * system.scale(P.cyl.generation)) for P in stops]
        window = 1.0 + max([float(np.max(np.abs(P.cyl.base.center))) for P in stops], default=0.0)
        _, D, _ = star_constants(system, system.mu, window, extra=extra)
    C4 = 2.0 * D
    star = []
    for P in stops:
        Q = P.cyl.base
        rad = C_star * system.scale(Q.generation)
        star.append(2.0 * mu_N_of_ball(system.mu, np.asarray(Q.center), rad) * 2.0 * P.cyl.log_r)
    sum_star = math.fsum(star)
    rhs_mu = norm / alpha
    certs = {
        "a_sup_g": _rel_le(sup_g, C1 * alpha),
        "b_support_mean": bool(support_ok and mean_ok),
        "c_bad_l1": _rel_le(sum_bad, 2.0 * C1 * norm),
        "d_stopping_measure": _rel_le(sum_mu, rhs_mu),
        "e_enlarged_measure": _rel_le(sum_star, C4 * rhs_mu),
    }
    bounds = {
        "sup_g": sup_g,
        "sum_bad_l1": sum_bad,
        "sum_mu_stopping": sum_mu,
        "sum_mu_star": sum_star,
        "norm1": norm,
        "max_abs_mean": max((abs(m) for m in means), default=0.0),
    }
    margins = {
        "a": C1 * alpha - sup_g,
        "c": 2.0 * C1 * norm - sum_bad,
        "d": rhs_mu - sum_mu,
        "e": C4 * rhs_mu - sum_star,
    }
    consts = {"C1": C1, "C4": C4, "D": D, "C_star": C_star}
    return DecompositionReport(float(alpha), stops, g, bad, bounds, certs, margins, consts)


# admissible-cylinder maximal function ---------------------------------------

class HLCatalog:
    """Finite catalog of admissible cylinders for the lower-bound maximal function.

    For every cube generation in ``generations`` and every radius of a
    log-grid with ``per_decade`` points per decade in (1, r_max], the
    anchor runs over its whole admissible interval; the supremum over the
    anchor is taken exactly. ``explicit`` cylinders are added as they are.
    """

    def __init__(self, system, params: AdmissibilityParams, generations, r_max: float = 1e3,
                 per_decade: int = 32, explicit=()):
        self.system = system
        self.params = params
        self.generations = [int(k) for k in generations]
        if not self.generations and not explicit:
            raise ValueError("empty catalog")
        top = int(math.floor(per_decade * math.log10(r_max) + 1e-9))
        self.radii = 10.0 ** (np.arange(1, top + 1) / per_decade)
        self.per_decade = per_decade
        self.explicit = list(explicit)

    @classmethod
    def around_family(cls, F: DyadicFamily, pad: int = 2, per_decade: int = 32, with_family: bool = False,
                      max_gen: int | None = None, **kw):
        gens = {nd.cyl.generation for nd in F.walk(max_gen)}
        lo, hi = min(gens) - pad, max(gens) + pad
        r_max = max(1e3, max(nd.cyl.r for nd in F.walk(max_gen)) ** 2)
        explicit = [nd.cyl for nd in F.walk(max_gen)] if with_family else ()
        return cls(F.system, F.params, range(lo, hi + 1), r_max, per_decade, explicit, **kw)

    def describe(self) -> dict:
        return {"generations": [min(self.generations), max(self.generations)] if self.generations else [],
                "radii": len(self.radii), "per_decade": self.per_decade, "explicit": len(self.explicit)}


def _pieces(f: SimpleFunction):
    # weighted cylinders whose signed sum is |f|
    out = []
    for nd, v, _ in f.atoms():
        w = abs(v)
        if w == 0.0:
            continue
        out.append((w, nd.cyl))
        out.extend((-w, d.cyl) for d in f._maxdesc[nd.uid])
    return out


def hl_maximal_flow(catalog: HLCatalog, f: SimpleFunction, n, t) -> np.ndarray:
    """Lower bound of the admissible-cylinder maximal function of |f| at (n, t)."""
    n = np.atleast_2d(np.asarray(n, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.zeros(t.shape[0])
    if f.is_zero:
        return out
    system = catalog.system
    pieces = _pieces(f)
    if not pieces:
        return out
    for k in catalog.generations:
        try:
            keys = system.keys(n, k)
            valid = np.ones(t.shape[0], dtype=bool)
        except WindowError:
            keys, valid = _keys_windowed(system, n, k)
        for key in np.unique(keys[valid]):
            sel = np.nonzero(valid & (keys == key))[0]
            Q = system.cube(k, int(key))
            mQ = system.measure(Q)
            w, lo_j, hi_j = [], [], []
            for wt, cyl in pieces:
                inter = system.intersect_measure(Q, cyl.base)
                if inter > 0.0:
                    a, b = U_interval(cyl)
                    w.append(wt * inter)
                    lo_j.append(a)
                    hi_j.append(b)
            if not w:
                continue
            w, lo_j, hi_j = np.array(w), np.array(lo_j), np.array(hi_j)
            tx = t[sel]
            for r in catalog.radii:
                lr = math.log(r)
                A_lo, A_hi = anchor_range(k, r, catalog.params)
                width = 2.0 * lr
                # window start u = log a - log r must satisfy u < t < u + width
                u_lo = np.maximum(tx - width, A_lo - lr)
                u_hi = np.minimum(tx, A_hi - lr)
                ok = u_lo <= u_hi
                if not np.any(ok):
                    continue
                bx = np.concatenate([lo_j - width, lo_j, hi_j - width, hi_j,
                                     [u_lo[ok].min(), u_hi[ok].max()]])
                bx = np.unique(bx[(bx >= u_lo[ok].min()) & (bx <= u_hi[ok].max())])
                ov = np.clip(np.minimum(bx[:, None] + width, hi_j) - np.maximum(bx[:, None], lo_j), 0.0, None)
                by = (ov @ w) / (width * mQ)
                best = pl_interval_max(bx, by, u_lo, u_hi)
                out[sel] = np.maximum(out[sel], np.where(ok, best, 0.0))
    for P in catalog.explicit:
        inside = contains_flow(P, n, t, system.spec)
        if np.any(inside):
            avg = f.integral_cylinder(P) / cylinder_measure(P)
            out[inside] = np.maximum(out[inside], avg)
    return out


def _keys_windowed(system, n, k):
    keys = np.zeros(n.shape[0], dtype=np.int64)
    valid = np.zeros(n.shape[0], dtype=bool)
    from .group import norm_N

    inside = norm_N(system.spec, n) <= getattr(system, "window", math.inf)
    try:
        if inside.any():
            keys[inside] = system.keys(n[inside], k)
            valid = inside
    except WindowError:
        pass
    return keys, valid


def hl_maximal(catalog: HLCatalog, f: SimpleFunction, x: GroupPoint) -> float:
    n, t = to_flow_array(f.family.Z, x.n_array, x.a)
    return float(hl_maximal_flow(catalog, f, n[None, :], np.array([t]))[0])


# covering lemma --------------------------------------------------------------

def greedy_cover(cylinders, ids=None) -> list:
    """Indices of a disjoint subfamily chosen by minimal base generation.

    Ties are broken by (generation, id, a); ``ids`` defaults to list order.
    """
    cyl = list(cylinders)
    ids = list(range(len(cyl))) if ids is None else list(ids)
    order = sorted(range(len(cyl)), key=lambda i: (cyl[i].generation, ids[i], cyl[i].a))
    chosen = []
    for i in order:
        if all(not intersects(cyl[i], cyl[j]) for j in chosen):
            chosen.append(i)
    return chosen


def envelope_inclusion(P_big: Cylinder, P_small: Cylinder, C: float, Z, rng, samples: int = 200) -> int:
    """Number of sampled points of ``P_small`` outside ``P_big``^C."""
    n, t = sample_cylinder(P_small, Z, rng, samples)
    env = envelope(P_big, C)
    return int(np.count_nonzero(~contains_flow(env, n, t, Z.spec)))


def verify_cover(cylinders, chosen, params: AdmissibilityParams, Z, rng, samples: int = 100) -> dict:
    """Check disjointness and that each cylinder sits in the C2-envelope of a chosen one."""
    cyl = list(cylinders)
    disjoint = all(not intersects(cyl[i], cyl[j]) for a, i in enumerate(chosen) for j in chosen[a + 1:])
    C2 = params.C2
    uncovered = 0
    escapes = 0
    for P in cyl:
        hosts = [cyl[j] for j in chosen if intersects(P, cyl[j]) and cyl[j].generation <= P.generation]
        if not hosts:
            uncovered += 1
            continue
        R = min(hosts, key=lambda c: c.generation)
        escapes += envelope_inclusion(R, P, C2, Z, rng, samples)
    return {"disjoint": disjoint, "uncovered": uncovered, "escapes": escapes,
            "ok": disjoint and uncovered == 0 and escapes == 0}


# weak type (1,1) campaign ---------------------------------------------------------

def alpha_grid(f: SimpleFunction, window_measure: float, ratio: float = 2.0) -> np.ndarray:
    """Geometric grid from ||f||_1 / mu(window) to 2 sup|f|."""
    lo = f.norm1() / window_measure
    hi = 2.0 * f.sup_abs()
    count = int(math.floor(math.log(hi / lo) / math.log(ratio))) + 1
    return lo * ratio ** np.arange(max(count, 1))


def _level_region(catalog: HLCatalog, f: SimpleFunction):
    # top catalog cubes over the support and the reachable t-range
    system = catalog.system
    k0 = min(catalog.generations) if catalog.generations else min(nd.cyl.generation for _, nd in f.terms)
    tops = {}
    for _, nd in f.terms:
        Q = nd.cyl.base
        A = system.ancestor(Q, k0) if Q.generation >= k0 else Q
        tops[(A.generation, A.key)] = A
    reach = 2.0 * math.log(catalog.radii[-1]) if len(catalog.radii) else 0.0
    for P in catalog.explicit:
        reach = max(reach, 2.0 * P.log_r)
    lo = min(U_interval(nd.cyl)[0] for _, nd in f.terms) - reach
    hi = max(U_interval(nd.cyl)[1] for _, nd in f.terms) + reach
    return list(tops.values()), lo, hi


def level_set_measures(catalog: HLCatalog, f: SimpleFunction, alphas, samples: int = 20000,
                       t_strata: int = 64, seed: int = 0) -> np.ndarray:
    """Stratified estimates of mu({M f > alpha}) for each alpha."""
    rng = np.random.default_rng(seed)
    system = catalog.system
    mu = system.mu
    tops, lo, hi = _level_region(catalog, f)
    edges = np.linspace(lo, hi, t_strata + 1)
    per = max(samples // (t_strata * len(tops)), 4)
    alphas = np.asarray(alphas, dtype=np.float64)
    est = np.zeros(alphas.shape[0])
    Z = f.family.Z
    for Q in tops:
        if mu.is_uniform:
            n_all = system.sample(Q, rng, per * t_strata)
            weight = np.full(n_all.shape[0], system.measure(Q))
        else:
            blo, bhi = system.bounds(Q)
            n_all = rng.uniform(blo, bhi, size=(per * t_strata, system.spec.m))
            weight = float(np.prod(bhi - blo)) * base_density(mu, n_all)
        t_all = np.concatenate([rng.uniform(edges[j], edges[j + 1], size=per) for j in range(t_strata)])
        dt = np.repeat(np.diff(edges), per)
        M = hl_maximal_flow(catalog, f, n_all, t_all)
        w = weight * dt / per
        est += np.array([math.fsum(w[M > a]) for a in alphas])
    return est


def weak11_campaign(catalog: HLCatalog, functions, alphas, params: AdmissibilityParams,
                    samples: int = 20000, seed: int = 0) -> list:
    """Rows (function_id, alpha, level_measure, bound, margin) with bound C2 ||f||_1 / alpha.

    ``alphas`` is either one grid for every function or a list of grids.
    The estimated level set is that of a lower bound of the maximal
    function, so it underestimates the true one.
    """
    C2 = params.C2
    rows = []
    for i, f in enumerate(functions):
        grid = alphas[i] if isinstance(alphas, (list, tuple)) and np.ndim(alphas[i]) == 1 else alphas
        grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
        level = level_set_measures(catalog, f, grid, samples, seed=seed + i)
        norm = f.norm1()
        for a, lm in zip(grid, level):
            bound = C2 * norm / a
            rows.append({"function_id": i, "alpha": float(a), "level_measure": float(lm),
                         "bound": float(bound), "margin": float(bound - lm)})
    return rows


# random inputs ------------------------------------------------------------------

def random_simple_function(F: DyadicFamily, rng, terms: int = 6, max_gen: int | None = None,
                           signed: bool = True) -> SimpleFunction:
    """Random combination of family cylinders drawn by random descent."""
    max_gen = F.down if max_gen is None else max_gen
    out = []
    for _ in range(terms):
        node = F.root
        depth = int(rng.integers(0, max_gen - F.root.gen + 1))
        for _ in range(depth):
            kids = F.children(node)
            node = kids[int(rng.integers(len(kids)))]
        c = rng.uniform(-3.0, 3.0) if signed else rng.uniform(0.1, 3.0)
        out.append((c, node))
    return SimpleFunction(F, out)
