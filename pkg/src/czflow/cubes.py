"""Dyadic cube systems on the base group N.

Two concrete systems are provided:

* :class:`AbelianDyadicSystem` -- half-open dyadic cubes of side 2^{-k}
  in R^m (delta = 1/2, exact integer arithmetic).
* :class:`HeisenbergNetSystem` -- windowed nested maximal nets for the
  Koranyi distance on H^1, with cells defined by nearest finest-level
  center followed by the parent links.

Cubes are identified by ``(generation, key)``; keys are integers unique
within a generation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import kernels
from .group import GroupSpec, base_inv, base_mul, norm_N
from .measure import FlowMeasure, KORANYI_BALL_CONSTANT, mu_N_of_box

__all__ = [
    "CubeSystemParams",
    "DyadicCube",
    "CubeSystem",
    "AbelianDyadicSystem",
    "HeisenbergNetSystem",
    "WindowError",
    "build_net_system",
    "certify_cube_system",
    "dump_cube_system",
]


class WindowError(ValueError):
    """A query left the region on which a cube system is defined."""


@dataclass(frozen=True)
class CubeSystemParams:
    delta: float
    c: float
    C1: float
    window: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not self.C1 >= 3.0:
            raise ValueError("C1 must be at least 3")
        if not 0.0 < self.c <= self.C1:
            raise ValueError("need 0 < c <= C1")
        if not self.window > 0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class DyadicCube:
    generation: int
    key: int
    center: tuple = field(compare=False, default=())
    flags: tuple = field(compare=False, default=())
    system: object = field(compare=False, default=None, repr=False)

    @property
    def id(self) -> int:
        return self.key


class CubeSystem:
    """Common interface of the concrete cube systems."""

    spec: GroupSpec
    mu: FlowMeasure
    params: CubeSystemParams
    name: str = "cubes"

    # subclasses implement the following
    def keys(self, n, k: int) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def cube(self, k: int, key: int) -> DyadicCube:  # pragma: no cover
        raise NotImplementedError

    def ancestor_keys(self, keys, k_from: int, k_to: int) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def children_cubes(self, Q: DyadicCube) -> list:  # pragma: no cover
        raise NotImplementedError

    def measure(self, Q: DyadicCube) -> float:  # pragma: no cover
        raise NotImplementedError

    def sample(self, Q: DyadicCube, rng, size: int) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    # shared helpers
    @property
    def delta(self) -> float:
        return self.params.delta

    @property
    def C1(self) -> float:
        return self.params.C1

    @property
    def c(self) -> float:
        return self.params.c

    def scale(self, k: int) -> float:
        return self.params.delta ** k

    def cube_at(self, n, k: int) -> DyadicCube:
        key = int(self.keys(np.asarray(n, dtype=np.float64).reshape(1, -1), k)[0])
        return self.cube(k, key)

    def contains(self, Q: DyadicCube, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        flat = n.reshape(-1, self.spec.dim)
        out = self.keys(flat, Q.generation) == Q.key
        return out.reshape(n.shape[:-1])

    def ancestor(self, Q: DyadicCube, k: int) -> DyadicCube:
        if k > Q.generation:
            raise ValueError("ancestor generation must not exceed the cube's")
        key = int(self.ancestor_keys(np.array([Q.key]), Q.generation, k)[0])
        return self.cube(k, key)

    def parent_cube(self, Q: DyadicCube) -> DyadicCube:
        return self.ancestor(Q, Q.generation - 1)

    def relation(self, Q1: DyadicCube, Q2: DyadicCube) -> str:
        """"equal", "contains" (Q1 > Q2), "inside" (Q1 < Q2) or "disjoint"."""
        if Q1.generation == Q2.generation:
            return "equal" if Q1.key == Q2.key else "disjoint"
        if Q1.generation < Q2.generation:
            anc = int(self.ancestor_keys(np.array([Q2.key]), Q2.generation, Q1.generation)[0])
            return "contains" if anc == Q1.key else "disjoint"
        anc = int(self.ancestor_keys(np.array([Q1.key]), Q1.generation, Q2.generation)[0])
        return "inside" if anc == Q2.key else "disjoint"

    def intersect_measure(self, Q1: DyadicCube, Q2: DyadicCube) -> float:
        rel = self.relation(Q1, Q2)
        if rel == "disjoint":
            return 0.0
        if rel in ("equal", "inside"):
            return self.measure(Q1)
        return self.measure(Q2)

    def record(self, Q: DyadicCube) -> dict:
        try:
            parent = self.parent_cube(Q).key
        except WindowError:
            parent = None
        return {
            "generation": int(Q.generation),
            "id": int(Q.key),
            "center": [float(v) for v in Q.center],
            "parent_id": parent,
            "flags": list(Q.flags),
        }


# abelian dyadic cubes ----------------------------------------------------

class AbelianDyadicSystem(CubeSystem):
    """Half-open dyadic cubes prod [j_i 2^{-k}, (j_i + 1) 2^{-k}) in R^m.

    For Haar measure C1 = max(3, 2^m, sqrt(m)); for power weights C1 is
    taken from a scan of cube ratios near the origin over generations
    ``scan`` (times a safety factor), since weighted children can carry
    most of their parent's mass.
    """

    name = "abelian-dyadic"

    def __init__(self, mu: FlowMeasure, scan=range(-20, 21), safety: float = 1.05):
        if mu.spec.is_heisenberg:
            raise ValueError("abelian cube system needs an abelian base")
        self.mu = mu
        self.spec = mu.spec
        m = self.spec.m
        self._bits = 62 // m
        self._offset = 1 << (self._bits - 1)
        C1 = float(max(3, 2 ** m, math.sqrt(m)))
        self.C1_scan = None
        if not mu.is_uniform:
            self.C1_scan = self._scan_ratios(scan)
            C1 = max(C1, safety * self.C1_scan)
        self.params = CubeSystemParams(0.5, 0.5, C1)

    # index packing
    def _pack(self, J: np.ndarray) -> np.ndarray:
        J = np.asarray(J, dtype=np.int64)
        if np.any(np.abs(J) >= self._offset):
            raise WindowError("dyadic index exceeds the representable range")
        out = np.zeros(J.shape[:-1], dtype=np.int64)
        for i in range(self.spec.m):
            out |= (J[..., i] + self._offset) << (self._bits * i)
        return out

    def _unpack(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64)
        mask = (1 << self._bits) - 1
        cols = [((keys >> (self._bits * i)) & mask) - self._offset for i in range(self.spec.m)]
        return np.stack(cols, axis=-1)

    def indices(self, n, k: int) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        J = np.floor(np.ldexp(n, k))
        if np.any(np.abs(J) >= self._offset):
            raise WindowError("point too far out for generation %d" % k)
        return J.astype(np.int64)

    def keys(self, n, k: int) -> np.ndarray:
        return self._pack(self.indices(n, k))

    def bounds(self, Q: DyadicCube):
        J = self._unpack(Q.key)
        lo = np.ldexp(J.astype(np.float64), -Q.generation)
        return lo, lo + math.ldexp(1.0, -Q.generation)

    def cube(self, k: int, key: int) -> DyadicCube:
        J = self._unpack(int(key)).astype(np.float64)
        center = np.ldexp(J + 0.5, -k)
        return DyadicCube(int(k), int(key), tuple(float(v) for v in center), (), self)

    def cube_from_index(self, k: int, J) -> DyadicCube:
        return self.cube(k, int(self._pack(np.asarray(J, dtype=np.int64))))

    def ancestor_keys(self, keys, k_from: int, k_to: int) -> np.ndarray:
        if k_to > k_from:
            raise ValueError("ancestor generation must not exceed the source")
        J = self._unpack(keys)
        return self._pack(J >> (k_from - k_to))

    def children_cubes(self, Q: DyadicCube) -> list:
        J = self._unpack(Q.key) * 2
        return [
            self.cube(Q.generation + 1, int(self._pack(J + np.array(off))))
            for off in product((0, 1), repeat=self.spec.m)
        ]

    def measure(self, Q: DyadicCube) -> float:
        lo, hi = self.bounds(Q)
        return mu_N_of_box(self.mu, lo, hi)

    def sample(self, Q: DyadicCube, rng, size: int) -> np.ndarray:
        lo, hi = self.bounds(Q)
        return rng.uniform(lo, hi, size=(size, self.spec.m))

    def outer_radius(self, Q: DyadicCube) -> float:
        return 0.5 * math.sqrt(self.spec.m) * math.ldexp(1.0, -Q.generation)

    def _scan_ratios(self, gens) -> float:
        worst = 1.0
        m = self.spec.m
        for k in gens:
            for J in product((-2, -1, 0, 1), repeat=m):
                P = self.cube_from_index(k, J)
                mp = self.measure(P)
                for child in self.children_cubes(P):
                    ratio = mp / self.measure(child)
                    worst = max(worst, ratio, 1.0 / (ratio - 1.0))
        return worst


# Heisenberg nets ---------------------------------------------------------

def _koranyi_ball_sample(rng, size: int, radius: float) -> np.ndarray:
    """Haar-uniform points of the Koranyi ball B(0, radius)."""
    out = []
    need = size
    while need > 0:
        m = int(need * 1.7) + 16
        q = rng.uniform(-2 * radius, 2 * radius, size=(m, 2))
        t = rng.uniform(-radius ** 2, radius ** 2, size=m)
        pts = np.column_stack([q, t])
        s = q[:, 0] ** 2 + q[:, 1] ** 2
        ok = s * s / 16.0 + t * t <= radius ** 4
        out.append(pts[ok][:need])
        need -= out[-1].shape[0]
    return np.concatenate(out)[:size]


class HeisenbergNetSystem(CubeSystem):
    """Windowed nested maximal nets on (H^1, Koranyi, Haar).

    Generation k uses a greedy maximal delta^k-separated subset of a
    random candidate pool, with X_k contained in X_{k+1}. A center of X_{k+1}
    has itself as parent if it already lies in X_k, otherwise its nearest
    X_k point. A point of the window belongs to the cell of its nearest
    finest-level center and to the ancestors of that cell. The constants
    c and C1 are certified empirically (see :attr:`certificate`).
    """

    name = "heisenberg-net"

    def __init__(
        self,
        mu: FlowMeasure,
        delta: float = 0.5,
        window: float = 8.0,
        generations=None,
        pool: int | None = None,
        seed: int = 0,
        volume_samples: int = 200_000,
        inner_samples: int = 50_000,
        probes: int = 20_000,
        inner_safety: float = 0.8,
    ):
        if not mu.spec.is_heisenberg:
            raise ValueError("net system is implemented for the Heisenberg base")
        if not mu.is_uniform:
            raise ValueError("Heisenberg cube systems support Haar measure only")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        self.mu = mu
        self.spec = mu.spec
        self.window = float(window)
        self.seed = int(seed)
        if generations is None:
            # coarsest separation about half the window radius
            kmin = int(math.ceil(math.log(self.window) / math.log(delta) - 1e-9)) + 1
            generations = (kmin, kmin + 1)
        self.k_min, self.k_max = int(generations[0]), int(generations[1])
        if self.k_max < self.k_min:
            raise ValueError("empty generation range")
        if delta ** self.k_min > 2.0 * self.window:
            raise ValueError("window too small relative to the coarsest generation")
        self._delta = float(delta)
        rng = np.random.default_rng(self.seed)
        finest = delta ** self.k_max
        if pool is None:
            pool = int(min(max(4.0 * (2.0 * self.window / finest) ** 4, 5000), 100_000))
        cand = _koranyi_ball_sample(rng, pool, self.window)
        # nested nets, coarse to fine, the identity seeded first
        self.centers = {}
        self.parent_ids = {}
        prev = np.zeros((1, 3))
        for k in range(self.k_min, self.k_max + 1):
            sep = delta ** k
            seeds = np.zeros((1, 3)) if k == self.k_min else prev
            mask = kernels.greedy_koranyi_net(cand, seeds, sep)
            net = np.vstack([seeds, cand[mask]])
            net = self._fill_gaps(rng, net, sep, probes)
            if k > self.k_min:
                idx, _ = kernels.koranyi_argmin(net, prev)
                idx[: prev.shape[0]] = np.arange(prev.shape[0])
                self.parent_ids[k] = idx
            self.centers[k] = net
            prev = net
        # finest id -> id at every generation
        self._anc = {self.k_max: np.arange(self.centers[self.k_max].shape[0])}
        for k in range(self.k_max - 1, self.k_min - 1, -1):
            self._anc[k] = self.parent_ids[k + 1][self._anc[k + 1]]
        self._children = {}
        for k in range(self.k_min + 1, self.k_max + 1):
            par = self.parent_ids[k]
            order = np.argsort(par, kind="stable")
            bounds = np.searchsorted(par[order], np.arange(self.centers[k - 1].shape[0] + 1))
            self._children[k - 1] = [order[bounds[i]:bounds[i + 1]] for i in range(len(bounds) - 1)]
        self._certify(rng, volume_samples, inner_samples, inner_safety)

    def _fill_gaps(self, rng, net, sep, probes, rounds=20):
        # add fresh window points farther than sep from the net until a
        # probe sample finds no uncovered point
        for _ in range(rounds):
            probe = _koranyi_ball_sample(rng, probes, self.window)
            _, d = kernels.koranyi_argmin(probe, net)
            far = probe[d >= sep]
            if far.shape[0] == 0:
                break
            mask = kernels.greedy_koranyi_net(far, net, sep)
            net = np.vstack([net, far[mask]])
        return net

    # certification -----------------------------------------------------
    def _certify(self, rng, volume_samples: int, inner_samples: int, inner_safety: float):
        W = self.window
        vol_window = KORANYI_BALL_CONSTANT * W ** 4
        pts = _koranyi_ball_sample(rng, volume_samples, W)
        fid, _ = kernels.koranyi_argmin(pts, self.centers[self.k_max])
        self._volumes = {}
        outer = {}
        for k in range(self.k_min, self.k_max + 1):
            ids = self._anc[k][fid]
            cnt = np.bincount(ids, minlength=self.centers[k].shape[0])
            self._volumes[k] = cnt * (vol_window / pts.shape[0])
            d = norm_N(self.spec, base_mul(self.spec, base_inv(self.spec, self.centers[k][ids]), pts))
            rad = np.zeros(self.centers[k].shape[0])
            np.maximum.at(rad, ids, d)
            outer[k] = rad / self._delta ** k
        C_ecc = max(float(v.max()) for v in outer.values())
        # inner radius: nearest foreign sample to each center
        sub = pts[:inner_samples]
        sub_fid = fid[:inner_samples]
        inner_ratio = math.inf
        self._partial = {}
        for k in range(self.k_min, self.k_max + 1):
            C = self.centers[k]
            scale = self._delta ** k
            partial = norm_N(self.spec, C) + C_ecc * scale > W
            self._partial[k] = partial
            best, _ = kernels.koranyi_cell_radii(sub, self._anc[k][sub_fid], C)
            interior = ~partial
            if interior.any():
                inner_ratio = min(inner_ratio, float(best[interior].min()) / scale)
        nchild = max((max(len(c) for c in ch) for ch in self._children.values()), default=2)
        ratios = []
        for k in range(self.k_min + 1, self.k_max + 1):
            vk = self._volumes[k]
            vp = self._volumes[k - 1][self.parent_ids[k]]
            ok = vk > 0
            if ok.any():
                r = vp[ok] / vk[ok]
                ratios.append(float(r.max()))
                lower = r[r > 1.0]
                if lower.size:
                    ratios.append(float((1.0 / (lower - 1.0)).max()))
        C1 = max(3.0, C_ecc, float(nchild), max(ratios, default=3.0))
        floor = 0.5 * self._delta ** (self.k_max - self.k_min)
        # sampled inner radii overestimate the true ones; keep a safety margin
        c = max(inner_safety * inner_ratio, floor) if math.isfinite(inner_ratio) else floor
        c = min(c, C1)
        self.params = CubeSystemParams(self._delta, c, C1, W)
        self.certificate = {
            "C1_eccentricity": C_ecc,
            "c_inner": c,
            "max_children": int(nchild),
            "max_volume_ratio": max(ratios, default=None),
            "volume_samples": int(pts.shape[0]),
            "c_floor": 0.5 * self._delta ** (self.k_max - self.k_min),
        }

    # interface ---------------------------------------------------------
    def _check_gen(self, k: int):
        if not self.k_min <= k <= self.k_max:
            raise WindowError(f"generation {k} outside [{self.k_min}, {self.k_max}]")

    def keys(self, n, k: int) -> np.ndarray:
        self._check_gen(k)
        n = np.asarray(n, dtype=np.float64).reshape(-1, 3)
        if np.any(norm_N(self.spec, n) > self.window):
            raise WindowError("point outside the net window")
        fid, _ = kernels.koranyi_argmin(n, self.centers[self.k_max])
        return self._anc[k][fid]

    def cube(self, k: int, key: int) -> DyadicCube:
        self._check_gen(k)
        key = int(key)
        if not 0 <= key < self.centers[k].shape[0]:
            raise KeyError(f"no cube {key} in generation {k}")
        flags = ("partial",) if self._partial[k][key] else ()
        return DyadicCube(k, key, tuple(float(v) for v in self.centers[k][key]), flags, self)

    def ancestor_keys(self, keys, k_from: int, k_to: int) -> np.ndarray:
        self._check_gen(k_from)
        self._check_gen(k_to)
        keys = np.asarray(keys, dtype=np.int64)
        for k in range(k_from, k_to, -1):
            keys = self.parent_ids[k][keys]
        return keys

    def children_cubes(self, Q: DyadicCube) -> list:
        if Q.generation >= self.k_max:
            raise WindowError("finest generation has no stored children")
        return [self.cube(Q.generation + 1, int(j)) for j in self._children[Q.generation][Q.key]]

    def measure(self, Q: DyadicCube) -> float:
        return float(self._volumes[Q.generation][Q.key])

    def generation_cubes(self, k: int) -> list:
        self._check_gen(k)
        return [self.cube(k, i) for i in range(self.centers[k].shape[0])]

    def sample(self, Q: DyadicCube, rng, size: int) -> np.ndarray:
        rad = min(self.certificate["C1_eccentricity"] * self._delta ** Q.generation * 1.0001, 2 * self.window)
        center = np.asarray(Q.center)
        out = []
        need = size
        tries = 0
        while need > 0:
            tries += 1
            if tries > 200:
                raise RuntimeError("rejection sampling of a net cell failed")
            loc = _koranyi_ball_sample(rng, max(4 * need, 256), rad)
            pts = base_mul(self.spec, center, loc)
            pts = pts[norm_N(self.spec, pts) <= self.window]
            if pts.shape[0] == 0:
                continue
            pts = pts[self.keys(pts, Q.generation) == Q.key]
            out.append(pts[:need])
            need -= out[-1].shape[0]
        return np.concatenate(out)[:size]

    def outer_radius(self, Q: DyadicCube) -> float:
        return self.params.C1 * self._delta ** Q.generation


def build_net_system(spec: GroupSpec, mu: FlowMeasure, delta: float = 0.5, window: float = 8.0,
                     generations=None, seed: int = 0, **kw) -> HeisenbergNetSystem:
    """Build the windowed net system (Heisenberg base only)."""
    if not spec.is_heisenberg or mu.spec != spec:
        raise ValueError("net systems are built on the Heisenberg base with a matching measure")
    return HeisenbergNetSystem(mu, delta, window, generations, seed=seed, **kw)


def certify_cube_system(system: CubeSystem, cubes, samples_per_cube: int = 200, seed: int = 0) -> dict:
    """Sample-based check of eccentricity, volume control and nesting.

    ``cubes`` is an iterable of cubes with stored children. Returns counts
    of violations; all zero means the system passed on this sample.
    """
    from .group import dist_N

    rng = np.random.default_rng(seed)
    spec = system.spec
    C1, c, delta = system.C1, system.c, system.delta
    out = {"cubes": 0, "outer_escapes": 0, "inner_misses": 0, "volume_violations": 0,
           "children_violations": 0, "sibling_violations": 0, "nesting_violations": 0}
    for Q in cubes:
        out["cubes"] += 1
        scale = delta ** Q.generation
        pts = system.sample(Q, rng, samples_per_cube)
        d = dist_N(spec, np.asarray(Q.center), pts)
        out["outer_escapes"] += int(np.sum(d >= C1 * scale))
        if "partial" not in Q.flags:
            if spec.is_heisenberg:
                loc = _koranyi_ball_sample(rng, samples_per_cube, c * scale * (1 - 1e-9))
                inner = base_mul(spec, np.asarray(Q.center), loc)
            else:
                g = rng.normal(size=(samples_per_cube, spec.m))
                g /= np.linalg.norm(g, axis=1, keepdims=True)
                rad = c * scale * rng.uniform(size=(samples_per_cube, 1)) ** (1.0 / spec.m) * (1 - 1e-12)
                inner = np.asarray(Q.center) + g * rad
            out["inner_misses"] += int(np.sum(~system.contains(Q, inner)))
        try:
            kids = system.children_cubes(Q)
        except WindowError:
            continue
        mq = system.measure(Q)
        if not 2 <= len(kids) <= C1:
            out["children_violations"] += 1
        for K in kids:
            mk = system.measure(K)
            if mk > 0 and mq > C1 * mk * (1 + 1e-12):
                out["volume_violations"] += 1
            if (1.0 + 1.0 / C1) * mk > mq * (1 + 1e-12):
                out["sibling_violations"] += 1
        for k in range(Q.generation, Q.generation + 1):
            coarse = system.keys(pts, k)
            fine_parent = system.ancestor_keys(system.keys(pts, k + 1), k + 1, k)
            out["nesting_violations"] += int(np.sum(coarse != fine_parent))
    return out


def dump_cube_system(system: CubeSystem, cubes) -> str:
    """JSON array of cube records {generation, id, center, parent_id, flags}."""
    return json.dumps([system.record(Q) for Q in cubes], sort_keys=True)
