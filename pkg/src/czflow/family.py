"""The dyadic family of admissible cylinders.

Starting from a large admissible P_0 = P_{r0,Q0}(1) the ascent chain is
P_{k+1} = p(P_k) with p = p_lr whenever that is admissible and otherwise
alternating p_up / p_down, starting with p_up. The family is the tree
below the top of the chain (the root):

* an S node whose parent step was p_lr has the child-cube cylinders as
  children (all of them in S);
* an S node whose parent step was p_up or p_down has two children: the
  next chain level and the complementary strip (role ``S~``);
* every other node has its sons as children.

Nodes are expanded lazily. The chain can be extended upwards with
:meth:`DyadicFamily.extend_up`, which keeps every existing node.
"""
from __future__ import annotations

import json
import math
from collections import defaultdict, deque

import numpy as np

from .cubes import CubeSystem, WindowError
from .cylinders import (
    Admissibility,
    AdmissibilityParams,
    Cylinder,
    U_interval,
    contains_flow,
    cylinder_measure,
    cylinder_record,
    is_admissible,
    parents,
    sons,
    strip_down,
    strip_up,
)
from .group import VerticalField, norm_N, to_flow_array

__all__ = ["FamilyNode", "DyadicFamily", "build_family", "initial_cube_generation"]

ROLES = ("S", "S~", "sons-of-S~", "positive")


class FamilyNode:
    __slots__ = ("cyl", "gen", "role", "parent", "_children", "level", "uid", "_measure")

    def __init__(self, cyl: Cylinder, gen: int, role: str, parent, level, uid: int):
        self.cyl = cyl
        self.gen = gen
        self.role = role
        self.parent = parent
        self.level = level
        self.uid = uid
        self._children = None
        self._measure = None

    def __repr__(self):
        return f"FamilyNode(uid={self.uid}, gen={self.gen}, role={self.role!r}, r={self.cyl.r:.6g}, a={self.cyl.a:.6g})"


def initial_cube_generation(r0: float, params: AdmissibilityParams, policy="smallest") -> int:
    """Generation of Q0 for P0 = P_{r0,Q0}(1).

    "smallest": the finest k with r0^2 <= delta^k; "largest": the coarsest
    k with delta^k <= lambda r0^gamma. An integer is returned unchanged.
    """
    if isinstance(policy, (int, np.integer)):
        return int(policy)
    ld = params.log_delta
    lr = math.log(r0)
    if policy == "smallest":
        return int(math.floor(2.0 * lr / ld + 1e-12))
    if policy == "largest":
        return int(math.ceil((params.log_lam + params.gamma * lr) / ld - 1e-12))
    raise ValueError(f"unknown initial cube policy {policy!r}")


class DyadicFamily:
    """Dyadic family on a single-root window, generations -up .. down."""

    def __init__(self, system: CubeSystem, params: AdmissibilityParams, Z: VerticalField,
                 P0: Cylinder | None = None, up: int = 3, down: int = 6, r0: float = math.e ** 2,
                 p0_policy="smallest"):
        if abs(params.delta - system.delta) > 1e-15:
            raise ValueError("admissibility delta differs from the cube system's delta")
        self.system = system
        self.params = params
        self.Z = Z
        self.spec = Z.spec
        self.down = int(down)
        if P0 is None:
            k0 = initial_cube_generation(r0, params, p0_policy)
            origin = np.zeros(self.spec.dim)
            try:
                Q0 = system.cube_at(origin, k0)
            except WindowError as exc:
                raise WindowError(f"initial cube generation {k0} is outside the cube window") from exc
            P0 = Cylinder(r0, Q0, 1.0)
        if is_admissible(P0, params) is not Admissibility.LARGE:
            raise ValueError("P0 must be a large admissible cylinder")
        self.P0 = P0
        self.chain = [P0]
        self.steps = []
        self.next_alternate = "up"
        self._nodes = []
        for _ in range(int(up)):
            self._ascend()
        top = len(self.chain) - 1
        self.root = self._new(self.chain[top], -top, "S", None, top)

    # construction ---------------------------------------------------------
    def _ascend(self):
        P = self.chain[-1]
        par = parents(P, self.params)
        if par.lr is not None and is_admissible(par.lr, self.params) is Admissibility.LARGE:
            nxt, step = par.lr, "lr"
        else:
            step = self.next_alternate
            nxt = par.up if step == "up" else par.down
            self.next_alternate = "down" if step == "up" else "up"
            if is_admissible(nxt, self.params) is not Admissibility.LARGE:
                raise ValueError(f"ascent step {step} left the admissible class")
        self.chain.append(nxt)
        self.steps.append(step)

    def _new(self, cyl, gen, role, parent, level):
        node = FamilyNode(cyl, gen, role, parent, level, len(self._nodes))
        self._nodes.append(node)
        return node

    def extend_up(self, levels: int = 1) -> FamilyNode:
        """Grow the chain and make its new top the root."""
        for _ in range(levels):
            old = self.root
            self._ascend()
            top = len(self.chain) - 1
            self.root = self._new(self.chain[top], -top, "S", None, top)
            kids = self._expand(self.root, reuse=old)
            self.root._children = kids
        return self.root

    def _expand(self, node: FamilyNode, reuse: FamilyNode | None = None) -> list:
        gen = node.gen + 1
        if node.role == "S" and node.level >= 1:
            below = self.chain[node.level - 1]
            step = self.steps[node.level - 1]
            if step == "lr":
                pairs = [(Cylinder(below.r, Q, below.a), "S")
                         for Q in self.system.children_cubes(node.cyl.base)]
            else:
                main = Cylinder(below.r, node.cyl.base, below.a)
                strip = strip_up(main) if step == "up" else strip_down(main)
                pairs = [(main, "S"), (strip, "S~")]
            out = []
            for cyl, role in pairs:
                if (reuse is not None and role == "S" and cyl.base == reuse.cyl.base
                        and cyl.r == reuse.cyl.r and cyl.a == reuse.cyl.a):
                    reuse.parent = node
                    out.append(reuse)
                else:
                    lvl = node.level - 1 if role == "S" else None
                    out.append(self._new(cyl, gen, role, node, lvl))
            return out
        if gen > 0:
            role = "positive"
        elif node.role in ("S~", "sons-of-S~"):
            role = "sons-of-S~"
        else:  # S at level 0 has positive-generation sons
            role = "positive"
        return [self._new(c, gen, role, node, None) for c in sons(node.cyl, self.params)]

    # navigation ----------------------------------------------------------------
    def children(self, node: FamilyNode) -> list:
        if node._children is None:
            node._children = self._expand(node)
        return node._children

    def parent(self, node: FamilyNode) -> FamilyNode:
        if node.parent is None:
            raise WindowError("the root has no stored parent; use extend_up")
        return node.parent

    def measure(self, node: FamilyNode) -> float:
        if node._measure is None:
            node._measure = cylinder_measure(node.cyl)
        return node._measure

    def node(self, uid: int) -> FamilyNode:
        return self._nodes[uid]

    @property
    def up(self) -> int:
        return len(self.chain) - 1

    @property
    def generation_range(self):
        return -self.up, self.down

    def ancestors(self, node: FamilyNode, include_self: bool = True) -> list:
        out = [node] if include_self else []
        while node.parent is not None:
            node = node.parent
            out.append(node)
        return out

    def is_ancestor(self, anc: FamilyNode, node: FamilyNode) -> bool:
        """True when ``anc`` contains ``node`` (or equals it)."""
        while node is not None and node.gen >= anc.gen:
            if node is anc:
                return True
            node = node.parent
        return False

    def walk(self, max_gen: int | None = None):
        """Breadth-first traversal from the root down to ``max_gen``."""
        max_gen = self.down if max_gen is None else max_gen
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            yield node
            if node.gen < max_gen:
                queue.extend(self.children(node))

    def nodes_at(self, gen: int) -> list:
        return [nd for nd in self.walk(gen) if nd.gen == gen]

    def chain_node(self, level: int) -> FamilyNode:
        """The node holding P_level (level 0 is P0)."""
        node = self.root
        while node.level is not None and node.level > level:
            node = next(c for c in self.children(node) if c.role == "S" and c.cyl.base == self._chain_base(c))
        if node.level != level:
            raise KeyError(level)
        return node

    def _chain_base(self, node):
        return self.chain[node.level].base

    # location --------------------------------------------------------------
    def locate_flow(self, n, t, k: int) -> np.ndarray:
        """Node uids of the generation-k cylinders containing (n, t); -1 if none."""
        n = np.atleast_2d(np.asarray(n, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        return self.paths_flow(n, t, k)[-1]

    def paths_flow(self, n, t, k: int) -> list:
        """Per generation root.gen .. k, the uid of the containing node (or -1)."""
        n = np.atleast_2d(np.asarray(n, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if k < self.root.gen:
            raise WindowError(f"generation {k} lies above the root")
        cur = np.where(self._contains(self.root, n, t), self.root.uid, -1)
        out = [cur]
        for _ in range(self.root.gen + 1, k + 1):
            nxt = np.full_like(cur, -1)
            for uid in np.unique(cur[cur >= 0]):
                idx = np.nonzero(cur == uid)[0]
                for child in self.children(self._nodes[uid]):
                    hit = self._contains(child, n[idx], t[idx])
                    nxt[idx[hit]] = child.uid
                    idx = idx[~hit]
                    if idx.size == 0:
                        break
            cur = nxt
            out.append(cur)
        return out

    def _contains(self, node, n, t):
        return contains_flow(node.cyl, n, t, self.spec)

    def generation_hits(self, n, t, gen: int) -> np.ndarray:
        """Number of generation-``gen`` nodes containing each point.

        Independent of the descent used by :meth:`paths_flow`: the nodes are
        indexed by (cube generation, cube key) and matched with searchsorted.
        """
        n = np.atleast_2d(np.asarray(n, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        hits = np.zeros(t.shape[0], dtype=np.int64)
        by_k = defaultdict(list)
        for nd in self.nodes_at(gen):
            lo, hi = U_interval(nd.cyl)
            by_k[nd.cyl.generation].append((nd.cyl.base.key, lo, hi))
        for k, rows in by_k.items():
            rows.sort()
            keys = np.array([r[0] for r in rows], dtype=np.int64)
            lo = np.array([r[1] for r in rows])
            hi = np.array([r[2] for r in rows])
            try:
                pk = self.system.keys(n, k)
                ok = np.ones(t.shape[0], dtype=bool)
            except WindowError:
                inside = norm_N(self.spec, n) <= getattr(self.system, "window", math.inf)
                pk = np.zeros(t.shape[0], dtype=np.int64)
                pk[inside] = self.system.keys(n[inside], k)
                ok = inside
            left = np.searchsorted(keys, pk, "left")
            right = np.searchsorted(keys, pk, "right")
            for j in range(int((right - left).max(initial=0))):
                idx = left + j
                sel = ok & (idx < right)
                ii = np.minimum(idx, len(keys) - 1)
                hits += sel & (lo[ii] < t) & (t < hi[ii])
        return hits

    def locate(self, x, k: int) -> FamilyNode:
        n, t = to_flow_array(self.Z, x.n_array, x.a)
        uid = int(self.locate_flow(n[None, :], np.array([t]), k)[0])
        if uid < 0:
            raise WindowError("point not covered by the family window")
        return self._nodes[uid]

    # reporting -------------------------------------------------------------
    def header(self) -> dict:
        return {
            "P0": cylinder_record(self.P0, self.params),
            "steps": list(self.steps),
            "next_alternate": self.next_alternate,
            "generations": list(self.generation_range),
            "delta": self.params.delta,
            "gamma": self.params.gamma,
            "lambda": self.params.lam,
            "C1": self.system.C1,
            "system": self.system.name,
        }

    def numbering(self, max_gen: int | None = None) -> dict:
        """Deterministic breadth-first ids: uid -> id."""
        return {nd.uid: i for i, nd in enumerate(self.walk(max_gen))}

    def dump_lines(self, max_gen: int | None = None) -> list:
        ids = self.numbering(max_gen)
        lines = []
        for nd in self.walk(max_gen):
            rec = {
                "id": ids[nd.uid],
                "generation": nd.gen,
                "parent_id": None if nd.parent is None else ids.get(nd.parent.uid),
                "role": nd.role,
                "measure": self.measure(nd),
            }
            rec.update(cylinder_record(nd.cyl, self.params))
            lines.append(json.dumps(rec, sort_keys=True))
        return lines


def build_family(system: CubeSystem, params: AdmissibilityParams, Z: VerticalField,
                 P0: Cylinder | None = None, depth=(3, 6), **kw) -> DyadicFamily:
    """Family with ``depth = (up, down)`` generations around P0."""
    up, down = depth
    return DyadicFamily(system, params, Z, P0, up=up, down=down, **kw)
