"""Hierarchical cover of the query domain by capsule ellipsoids.

Level ``i`` nodes use the distance parameter ``r_i = r_plus / 2**i``. A node
whose parameter has dropped below the local feature size at its center is a
basic leaf; its ellipsoid is refined by shrinking the proxy shape by
``2**-j`` until the final-leaf rule holds. Final leaves store the segment
nearest to their center.

Every level is built by ``_Builder.cover``, which covers the union of the
previous level's non-leaf ellipsoids (clipped to the domain ball) and
certifies the cover cell by cell: a cell of radius ``h`` (in the parent's
normalised coordinates) counts as covered by node ``y`` when
``gauge_y(cell center) + h * ||L_y^{-1} L_parent|| <= 1``.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from .capsules import build_capsule
from .config import ParseError, ScaleConstants, UsageError
from .ellipsoids import Ellipsoid, ellipsoids_disjoint, inscribed_factor
from .geometry import DomainBall, SegmentSet, domain_ball, instance_to_dict, instance_from_dict, nearest_two

log = logging.getLogger(__name__)

INTERNAL = "internal"
BASIC_LEAF = "basic_leaf"
FINAL_LEAF = "final_leaf"


@dataclass
class BuildConfig:
    lam_outer: float = 0.5
    lam_inner: float | None = None
    # stop early when a node's representative is certified for its whole ellipsoid
    certify: bool = True
    seed: int = 0
    audit: bool = True
    root_samples: int = 100_000
    node_samples: int = 1_000
    initial_half_side: float = 0.5
    min_half_side: float = 1.0 / 1024
    # cubes smaller than this fraction of every node holding their center get a node of their own
    seam_ratio: float = 0.05
    mvie_tol: float = 1e-2
    mvie_max_iter: int = 200
    max_nodes: int = 2_000_000
    max_extra_refine: int = 24


@dataclass
class AvdNode:
    id: int
    center: np.ndarray
    level: int
    distance_param: float
    refine_exponent: int
    outer: Ellipsoid
    inner: Ellipsoid
    kind: str
    children: list = field(default_factory=list)
    representative: int | None = None
    basic: bool = False  # the node where r_i first dropped below the LFS
    fill: bool = False  # added to complete the cover despite overlapping packing ellipsoids
    certified: bool = False  # final because its representative was certified directly
    lfs_pair: tuple | None = None  # sorted ids of the two nearest segments at the center


@dataclass
class BuildStats:
    levels: int = 0
    node_count: int = 0
    internal_count: int = 0
    basic_leaf_count: int = 0
    final_leaf_count: int = 0
    certified_leaf_count: int = 0
    fill_count: int = 0
    max_out_degree: int = 0
    per_pair_charges: dict = field(default_factory=dict)
    uncovered_sample_rate: float = 0.0
    audit_samples: int = 0
    uncertified_cells: int = 0

    @property
    def max_pair_charge(self) -> int:
        return max(self.per_pair_charges.values(), default=0)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["per_pair_charges"] = {f"{i},{j}": c for (i, j), c in sorted(self.per_pair_charges.items())}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "BuildStats":
        doc = dict(doc)
        pairs = {}
        for key, c in doc.pop("per_pair_charges", {}).items():
            i, j = key.split(",")
            pairs[(int(i), int(j))] = int(c)
        return cls(per_pair_charges=pairs, **doc)


@dataclass
class QueryResult:
    segment: int
    distance: float
    path_length: int
    fallback: bool

    def to_json(self) -> dict:
        return asdict(self)


# -- representative certificate -------------------------------------------


def certify_representative(S: SegmentSet, E: Ellipsoid, eps: float, rep: int | None = None) -> bool:
    """Whether ``rep`` (default: nearest to the center) is an eps-ANN on all of ``E``.

    For every other segment k one of two rigorous bounds must show
    ``d_rep(q) <= (1 + eps) d_k(q)`` on E:

    * box bound: an upper bound on ``d_rep`` over E against a lower bound
      on ``d_k``, each split into the offset from the supporting line and
      the overshoot along it;
    * gradient bound: ``d_k`` is convex and ``d_rep`` has curvature at most
      ``1 / d_rep``, so ``d_rep - (1+eps) d_k`` exceeds its value at the
      center by at most ``|L g| + R**2 / (2 (d_rep(c) - R))`` where ``g``
      is its gradient at the center and R the largest semi-axis.
    """
    if S.n == 1:
        return True
    c = E.center
    L = E.factor
    rel = c - S.A
    t = np.einsum("nd,nd->n", rel, S.V)
    tc = np.clip(t, 0.0, S.lengths)
    diff = rel - tc[:, None] * S.V
    dist = np.linalg.norm(diff, axis=1)
    if rep is None:
        rep = int(np.argmin(dist))
    rmax = E.max_radius
    # gradient bound
    grad = np.divide(diff, dist[:, None], out=np.zeros_like(diff), where=dist[:, None] > 0)
    gap = dist[rep] - (1.0 + eps) * dist
    if dist[rep] > rmax:
        g = grad[rep] - (1.0 + eps) * grad
        slope = np.linalg.norm(g @ L, axis=1)
        ok = gap + slope + rmax**2 / (2.0 * (dist[rep] - rmax)) <= 0.0
    else:
        ok = np.zeros(S.n, dtype=bool)
    ok[rep] = True
    if ok.all():
        return True
    # box bound
    wn = np.linalg.norm(rel - t[:, None] * S.V, axis=1)
    Lv = S.V @ L  # rows are L v (L symmetric)
    sv = np.linalg.norm(Lv, axis=1)
    G = (L @ L)[None, :, :] - np.einsum("ni,nj->nij", Lv, Lv)
    pn = np.sqrt(np.maximum(np.linalg.eigvalsh(G)[:, -1], 0.0))
    tmin, tmax = t - sv, t + sv
    ex_up = max(0.0, -tmin[rep], tmax[rep] - S.lengths[rep])
    ex_lo = np.maximum.reduce([np.zeros_like(t), -tmax, tmin - S.lengths])
    upper = min(math.hypot(wn[rep] + pn[rep], ex_up), dist[rep] + rmax)
    lower = np.maximum(np.hypot(np.maximum(wn - pn, 0.0), ex_lo), dist - rmax)
    ok |= upper <= (1.0 + eps) * lower
    return bool(ok.all())


# -- the DAG -----------------------------------------------------------------


class AvdDag:
    def __init__(self, S: SegmentSet, eps: float, config: BuildConfig, domain: DomainBall,
                 nodes: list[AvdNode], roots: list[int], stats: BuildStats):
        self.source = S
        self.eps = float(eps)
        self.config = config
        self.consts = ScaleConstants(S.dim, config.lam_outer, config.lam_inner)
        self.domain = domain
        self.nodes = nodes
        self.roots = roots
        self.build_stats = stats
        self._stacks: dict[int, tuple] = {}

    @property
    def dim(self) -> int:
        return self.source.dim

    def __len__(self) -> int:
        return len(self.nodes)

    def _stack(self, key: int, ids: list[int]):
        st = self._stacks.get(key)
        if st is None:
            C = np.array([self.nodes[k].outer.center for k in ids]).reshape(-1, self.dim)
            A = np.array([self.nodes[k].outer.shape for k in ids]).reshape(-1, self.dim, self.dim)
            st = (np.asarray(ids, dtype=int), C, A)
            self._stacks[key] = st
        return st

    def _first_containing(self, key: int, ids: list[int], q: np.ndarray) -> int | None:
        if not ids:
            return None
        idx, C, A = self._stack(key, ids)
        U = q - C
        f = np.einsum("ki,kij,kj->k", U, A, U)
        hit = np.flatnonzero(f <= 1.0 + 1e-12)
        return int(idx[hit[0]]) if len(hit) else None

    def query(self, q) -> QueryResult:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim,):
            raise UsageError(f"query point must have {self.dim} coordinates")
        S = self.source
        if not self.domain.contains(q):
            return QueryResult(0, float(S.distances(q)[0]), 0, True)
        node_id = self._first_containing(-1, self.roots, q)
        path = 0
        if node_id is None:
            leaf = self._nearest_final(q, self.roots)
            return QueryResult(leaf, float(S.distances(q)[leaf]), path, True)
        while True:
            node = self.nodes[node_id]
            path += 1
            if node.kind == FINAL_LEAF:
                rep = node.representative
                return QueryResult(rep, float(S.distances(q)[rep]), path, False)
            nxt = self._first_containing(node_id, node.children, q)
            if nxt is None:
                rep = self._nearest_final(q, node.children or [node_id])
                return QueryResult(rep, float(S.distances(q)[rep]), path, True)
            node_id = nxt

    def query_many(self, Q) -> list[QueryResult]:
        return [self.query(q) for q in np.atleast_2d(np.asarray(Q, dtype=float))]

    def descendants(self, ids) -> list[int]:
        seen = set()
        stack = list(ids)
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            stack.extend(self.nodes[k].children)
        return sorted(seen)

    def _nearest_final(self, q, ids) -> int:
        finals = [k for k in self.descendants(ids) if self.nodes[k].kind == FINAL_LEAF]
        if not finals:
            return 0
        C = np.array([self.nodes[k].center for k in finals])
        k = finals[int(np.argmin(np.linalg.norm(C - q, axis=1)))]
        return int(self.nodes[k].representative)

    def stats(self) -> BuildStats:
        return self.build_stats

    def charge_report(self) -> dict:
        return dict(self.build_stats.per_pair_charges)

    def nodes_at(self, level: int, exponent: int = 0) -> list[AvdNode]:
        return [n for n in self.nodes if n.level == level and n.refine_exponent == exponent]


# -- construction -------------------------------------------------------------


def _cube_cells(half_side: float, dim: int) -> np.ndarray:
    """Centers of a cube grid of the given half side covering the unit ball."""
    k = int(math.ceil(1.0 / (2 * half_side) - 1e-12))
    ticks = (np.arange(-k, k) + 0.5) * 2 * half_side
    grid = np.array(list(product(ticks, repeat=dim)))
    # keep cubes that meet the unit ball
    near = np.linalg.norm(np.maximum(np.abs(grid) - half_side, 0.0), axis=1) <= 1.0
    return grid[near]


class _NodeTable:
    """Growing arrays of node geometry for vectorised coverage tests."""

    def __init__(self, dim: int, capacity: int = 64):
        self.dim = dim
        self.ids: list[int] = []
        self._c = np.zeros((capacity, dim))
        self._a = np.zeros((capacity, dim, dim))
        self._li = np.zeros((capacity, dim, dim))
        self._l = np.zeros((capacity, dim, dim))
        self._half = np.zeros((capacity, dim))
        self._r = np.zeros(capacity)

    def __len__(self) -> int:
        return len(self.ids)

    centers = property(lambda self: self._c[: len(self.ids)])
    shapes = property(lambda self: self._a[: len(self.ids)])
    inv_factors = property(lambda self: self._li[: len(self.ids)])
    factors = property(lambda self: self._l[: len(self.ids)])
    half_widths = property(lambda self: self._half[: len(self.ids)])  # axis-aligned bounding box
    radii = property(lambda self: self._r[: len(self.ids)])

    def add(self, node: AvdNode, inner: bool = False):
        E = node.inner if inner else node.outer
        k = len(self.ids)
        if k == len(self._r):
            grow = lambda a: np.concatenate([a, np.zeros_like(a)])
            self._c, self._a, self._li, self._l = grow(self._c), grow(self._a), grow(self._li), grow(self._l)
            self._half, self._r = grow(self._half), grow(self._r)
        self.ids.append(node.id)
        self._c[k] = E.center
        self._a[k] = E.shape
        self._li[k] = E.inv_factor
        self._l[k] = E.factor
        self._half[k] = np.linalg.norm(E.factor, axis=1)
        self._r[k] = E.max_radius

    def near_box(self, center, half) -> np.ndarray:
        """Indices whose bounding boxes meet the box ``center +- half``."""
        return np.flatnonzero((np.abs(self.centers - center) <= self.half_widths + half).all(axis=1))


class _Builder:
    def __init__(self, S: SegmentSet, eps: float, config: BuildConfig):
        self.S = S
        self.eps = eps
        self.cfg = config
        self.consts = ScaleConstants(S.dim, config.lam_outer, config.lam_inner)
        self.domain = domain_ball(S, eps)
        self.nodes: list[AvdNode] = []
        self.uncertified = 0
        self.J = self.consts.refinement_depth(eps)
        self._shape_cache: dict[tuple, np.ndarray] = {}

    # node geometry -------------------------------------------------------

    def base_factor(self, y: np.ndarray, r: float) -> np.ndarray:
        key = (y.tobytes(), r)
        L = self._shape_cache.get(key)
        if L is None:
            L, _ = inscribed_factor(build_capsule(self.S, y, r), self.cfg.mvie_tol, self.cfg.mvie_max_iter)
            self._shape_cache[key] = L
        return L

    def make_node(self, y, level, r, j) -> AvdNode:
        if len(self.nodes) >= self.cfg.max_nodes:
            raise RuntimeError(f"node budget of {self.cfg.max_nodes} exceeded")
        base = Ellipsoid.from_factor(y, self.base_factor(y, r))
        scale = self.consts.lam_outer * 2.0 ** (-j)
        outer = base.scaled(scale)
        inner = base.scaled(self.consts.lam_inner * 2.0 ** (-j))
        node = AvdNode(len(self.nodes), y, level, r, j, outer, inner, INTERNAL)
        self.classify(node)
        self.nodes.append(node)
        return node

    def classify(self, node: AvdNode):
        S = self.S
        if S.n == 1:
            node.kind, node.representative = FINAL_LEAF, 0
            return
        d = S.distances(node.center)
        i1, i2 = nearest_two(d)
        phi = float(d[i2])
        node.lfs_pair = (min(i1, i2), max(i1, i2))
        r = node.distance_param
        if node.refine_exponent == 0 and r <= phi:
            node.basic = True
        if self.cfg.certify and certify_representative(S, node.outer, self.eps, i1):
            node.kind, node.representative, node.certified = FINAL_LEAF, i1, True
            return
        if node.refine_exponent == 0 and not node.basic:
            node.kind = INTERNAL
            return
        j = node.refine_exponent
        lam = self.consts.lam_outer * 2.0 ** (-j)
        center_rule = lam * max(1.0, r / phi) <= min(self.eps, 1.0) / 3.0
        if j >= self.J and center_rule:
            node.kind, node.representative = FINAL_LEAF, i1
        elif j == 0:
            node.kind = BASIC_LEAF
        else:
            node.kind = INTERNAL

    # covering ------------------------------------------------------------

    def cover(self, regions: list[Ellipsoid], level: int, r: float, j: int) -> list[AvdNode]:
        """Certified cover of ``union(regions) & domain`` by new nodes.

        Each region is tiled by cubes in its normalised coordinates. A cube
        of circumradius ``h`` is covered by node k when its center has gauge
        ``g_k`` with ``g_k + h * n_k <= 1``, ``n_k`` being the distortion
        norm between the region and the node. A cube is split only when
        some node will cover all of its halves (``g_k + 2 h n_k <= 1``), when
        it is still coarse against a node holding its center, or when a node
        was just placed at its center; otherwise a new node is placed there.
        """
        table = _NodeTable(self.S.dim)
        packing = _NodeTable(self.S.dim)
        created: list[AvdNode] = []
        dom = self.domain
        d = self.S.dim
        offsets = np.array(list(product((-1.0, 1.0), repeat=d)))
        for R in regions:
            LR = R.factor
            reach = R.max_radius

            def norms_for(idx):
                M = table.inv_factors[idx] @ LR
                return np.sqrt(np.linalg.eigvalsh(np.einsum("kji,kjl->kil", M, M))[:, -1])

            near = table.near_box(R.center, np.linalg.norm(LR, axis=1))
            cand = near
            cand_norm = norms_for(near) if len(near) else np.zeros(0)
            e = self.cfg.initial_half_side
            cells = _cube_cells(e, d)
            while len(cells):
                h = e * math.sqrt(d)
                X = R.center + cells @ LR.T
                # drop cubes that miss the domain ball
                keep = np.linalg.norm(X - dom.center, axis=1) - h * reach <= dom.radius
                cells, X = cells[keep], X[keep]
                if not len(cells):
                    break
                cert, splittable = self._verdicts(table, cand, h * cand_norm, X)
                split = list(cells[~cert & splittable])
                pending = np.flatnonzero(~cert & ~splittable)
                # verdicts of the nodes placed during this pass on the pending cells
                done = np.zeros(len(pending), dtype=bool)
                halve = np.zeros(len(pending), dtype=bool)
                for pos, k in enumerate(pending):
                    if done[pos]:
                        continue
                    if halve[pos]:
                        split.append(cells[k])
                        continue
                    u = cells[k]
                    nu = np.linalg.norm(u)
                    y = R.center + LR @ (u / nu if nu > 1.0 else u)
                    node = self.make_node(y, level, r, j)
                    table.add(node)
                    created.append(node)
                    new = len(table.ids) - 1
                    cand = np.append(cand, new)
                    n_new = float(norms_for(np.array([new]))[0])
                    cand_norm = np.append(cand_norm, n_new)
                    self._classify_packing(node, packing)
                    rest = pending[pos + 1 :]
                    if len(rest):
                        gk = np.linalg.norm((X[rest] - node.outer.center) @ table.inv_factors[new], axis=1)
                        hk = h * n_new
                        done[pos + 1 :] |= gk + hk <= 1.0
                        halve[pos + 1 :] |= (gk + 2 * hk <= 1.0) | ((gk < 1.0) & (hk > self.cfg.seam_ratio))
                    if nu <= 1.0 and h * n_new <= 1.0:
                        continue
                    if e / 2 < self.cfg.min_half_side:
                        self.uncertified += 1
                        continue
                    split.append(cells[k])
                if not split:
                    break
                e /= 2
                sub = (np.array(split)[:, None, :] + e * offsets[None, :, :]).reshape(-1, d)
                # a cube meets the unit ball iff its nearest point does
                cells = sub[np.linalg.norm(np.maximum(np.abs(sub) - e, 0.0), axis=1) <= 1.0]
        return created

    def _verdicts(self, table, cand, hn, X) -> tuple[np.ndarray, np.ndarray]:
        """Per cell of X: covered by some candidate, and whether halving it helps.

        ``hn`` holds ``h * n_k`` per candidate. Only cells within a
        candidate's largest semi-axis can have gauge below 1, so pairs are
        found with a k-d tree over the cells.
        """
        cert = np.zeros(len(X), dtype=bool)
        halve = np.zeros(len(X), dtype=bool)
        if not len(cand) or not len(X):
            return cert, halve
        rad = table.radii[cand] * (1.0 + 1e-9)
        pairs = cKDTree(table.centers[cand]).sparse_distance_matrix(
            cKDTree(X), float(rad.max()), output_type="ndarray"
        )
        pairs = pairs[pairs["v"] <= rad[pairs["i"]]]
        if not len(pairs):
            return cert, halve
        ki, ci = pairs["i"], pairs["j"]
        nodes = cand[ki]
        g = np.linalg.norm(np.einsum("pi,pij->pj", X[ci] - table.centers[nodes], table.inv_factors[nodes]), axis=1)
        hk = hn[ki]
        cert[ci[g + hk <= 1.0]] = True
        halve[ci[(g + 2 * hk <= 1.0) | ((g < 1.0) & (hk > self.cfg.seam_ratio))]] = True
        return cert, halve

    def _classify_packing(self, node: AvdNode, packing: "_NodeTable"):
        """Mark ``node`` as fill when its inner ellipsoid meets an earlier packing one."""
        E = node.inner
        for k in packing.near_box(E.center, np.linalg.norm(E.factor, axis=1) * (1 + 1e-9)):
            if not ellipsoids_disjoint(E, self.nodes[packing.ids[k]].inner):
                node.fill = True
                return
        packing.add(node, inner=True)

    # linking -------------------------------------------------------------

    def link(self, parents: list[AvdNode], children: list[AvdNode]):
        if not parents or not children:
            return
        table = _NodeTable(self.S.dim, len(parents))
        for p in parents:
            table.add(p)
        for ch in children:
            E = ch.outer
            near = table.near_box(E.center, np.linalg.norm(E.factor, axis=1) * (1 + 1e-9))
            if not len(near):
                continue
            D = table.centers[near] - E.center
            dist = np.linalg.norm(D, axis=1)
            U = D / np.maximum(dist, 1e-300)[:, None]
            # supports along the center line: a strict gap separates them
            h_child = np.linalg.norm(U @ E.factor, axis=1)
            h_par = np.linalg.norm(np.einsum("kij,kj->ki", table.factors[near], U), axis=1)
            apart = h_child + h_par < dist * (1.0 - 1e-9)
            # the child's boundary point toward each parent center, inside that parent
            g = np.linalg.norm(D @ E.inv_factor.T, axis=1)
            P = E.center + D / np.maximum(g, 1.0)[:, None]
            gp = np.linalg.norm(np.einsum("kij,kj->ki", table.inv_factors[near], P - table.centers[near]), axis=1)
            meet = (g <= 1.0) | (gp <= 1.0)
            for k, a, m in zip(near, apart, meet):
                if m or (not a and not ellipsoids_disjoint(parents[k].outer, E)):
                    parents[k].children.append(ch.id)
        for p in parents:
            p.children.sort()

    # driver --------------------------------------------------------------

    def run(self) -> AvdDag:
        S, dom = self.S, self.domain
        if S.n == 1:
            ball = Ellipsoid.ball(dom.center, dom.radius)
            inner = ball.scaled(self.consts.lam_inner / self.consts.lam_outer)
            node = AvdNode(0, dom.center.copy(), 0, dom.radius, 0, ball, inner, FINAL_LEAF, representative=0)
            self.nodes.append(node)
            return self.finish([0])
        roots = self.cover([Ellipsoid.ball(dom.center, dom.radius)], 0, dom.radius, 0)
        active = [nd for nd in roots if nd.kind == INTERNAL]
        basics = {0: [nd for nd in roots if nd.kind == BASIC_LEAF]}
        level = 0
        while active:
            level += 1
            new = self.cover([p.outer for p in active], level, dom.radius / 2.0**level, 0)
            self.link(active, new)
            log.debug("level %d: %d nodes from %d parents", level, len(new), len(active))
            active = [nd for nd in new if nd.kind == INTERNAL]
            basics[level] = [nd for nd in new if nd.kind == BASIC_LEAF]
        for level, group in basics.items():
            self.refine(group)
        return self.finish([nd.id for nd in roots])

    def refine(self, group: list[AvdNode]):
        """Refine all basic leaves of one level together, halving the scale each round."""
        active = group
        j = 0
        while active:
            j += 1
            if j > self.J + self.cfg.max_extra_refine:
                raise RuntimeError(f"refinement at level {group[0].level} did not terminate")
            new = self.cover([p.outer for p in active], group[0].level, group[0].distance_param, j)
            log.debug("level %d exponent %d: %d nodes from %d parents", group[0].level, j, len(new), len(active))
            self.link(active, new)
            active = [nd for nd in new if nd.kind != FINAL_LEAF]

    def finish(self, roots: list[int]) -> AvdDag:
        st = BuildStats()
        kinds = Counter(nd.kind for nd in self.nodes)
        st.node_count = len(self.nodes)
        st.internal_count = kinds[INTERNAL]
        st.final_leaf_count = kinds[FINAL_LEAF]
        st.basic_leaf_count = sum(nd.basic for nd in self.nodes)
        st.certified_leaf_count = sum(nd.certified for nd in self.nodes)
        st.fill_count = sum(nd.fill for nd in self.nodes)
        st.levels = 1 + max(nd.level + nd.refine_exponent for nd in self.nodes)
        st.max_out_degree = max(len(nd.children) for nd in self.nodes)
        charges = Counter(nd.lfs_pair for nd in self.nodes if nd.basic and nd.lfs_pair is not None)
        st.per_pair_charges = dict(sorted(charges.items()))
        st.uncertified_cells = self.uncertified
        dag = AvdDag(self.S, self.eps, self.cfg, self.domain, self.nodes, roots, st)
        if self.cfg.audit:
            rate, total = coverage_audit(dag, self.cfg.root_samples, self.cfg.node_samples, self.cfg.seed)
            st.uncovered_sample_rate = rate
            st.audit_samples = total
        return dag


def build(S: SegmentSet, eps: float, config: BuildConfig | None = None) -> AvdDag:
    """Build the approximate Voronoi DAG for ``S`` at approximation ``eps``."""
    if not eps > 0:
        raise UsageError("epsilon must be positive")
    config = config or BuildConfig()
    return _Builder(S, float(eps), config).run()


# -- audit -----------------------------------------------------------------


def _uniform_ball(rng, center, radius, m):
    d = len(center)
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return center + g * (radius * rng.uniform(size=m) ** (1.0 / d))[:, None]


def _contained_any(X, nodes: list[AvdNode]) -> np.ndarray:
    C = np.array([n.outer.center for n in nodes])
    A = np.array([n.outer.shape for n in nodes])
    out = np.zeros(len(X), dtype=bool)
    for c, a in zip(C, A):
        U = X - c
        out |= np.einsum("mi,ij,mj->m", U, a, U) <= 1.0 + 1e-12
    return out


def coverage_audit(dag: AvdDag, root_samples: int, node_samples: int, seed: int) -> tuple[float, int]:
    """Fraction of sampled domain points missed by the roots or by a node's children."""
    rng = np.random.default_rng(seed)
    dom = dag.domain
    misses = 0
    total = 0
    roots = [dag.nodes[k] for k in dag.roots]
    if root_samples:
        X = _uniform_ball(rng, dom.center, dom.radius, root_samples)
        misses += int((~_contained_any(X, roots)).sum())
        total += root_samples
    if node_samples:
        for nd in dag.nodes:
            if nd.kind == FINAL_LEAF:
                continue
            X = nd.outer.sample_interior(node_samples, rng)
            X = X[np.linalg.norm(X - dom.center, axis=1) <= dom.radius]
            if not len(X):
                continue
            kids = [dag.nodes[k] for k in nd.children]
            hit = _contained_any(X, kids) if kids else np.zeros(len(X), bool)
            misses += int((~hit).sum())
            total += len(X)
    return (misses / total if total else 0.0), total


# -- structure files ---------------------------------------------------------

FORMAT_VERSION = 1


def _node_to_json(nd: AvdNode) -> dict:
    return {
        "id": nd.id,
        "center": nd.center.tolist(),
        "level": nd.level,
        "distance_param": nd.distance_param,
        "refine_exponent": nd.refine_exponent,
        "kind": nd.kind,
        "children": list(nd.children),
        "representative": nd.representative,
        "basic": nd.basic,
        "fill": nd.fill,
        "certified": nd.certified,
        "lfs_pair": list(nd.lfs_pair) if nd.lfs_pair is not None else None,
        "outer": nd.outer.to_json(),
        "inner": nd.inner.to_json(),
    }


def _node_from_json(doc: dict, k: int, dim: int) -> AvdNode:
    try:
        if doc["id"] != k:
            raise ValueError(f"id {doc['id']} out of order")
        if doc["kind"] not in (INTERNAL, BASIC_LEAF, FINAL_LEAF):
            raise ValueError(f"unknown kind {doc['kind']!r}")
        center = np.asarray(doc["center"], dtype=float)
        if center.shape != (dim,):
            raise ValueError("center has the wrong dimension")
        pair = doc.get("lfs_pair")
        return AvdNode(
            id=k,
            center=center,
            level=int(doc["level"]),
            distance_param=float(doc["distance_param"]),
            refine_exponent=int(doc["refine_exponent"]),
            outer=Ellipsoid.from_json(doc["outer"]),
            inner=Ellipsoid.from_json(doc["inner"]),
            kind=doc["kind"],
            children=[int(c) for c in doc["children"]],
            representative=doc["representative"],
            basic=bool(doc.get("basic", False)),
            fill=bool(doc.get("fill", False)),
            certified=bool(doc.get("certified", False)),
            lfs_pair=tuple(pair) if pair is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ParseError(f"node {k}: {msg}") from exc


def dag_to_json(dag: AvdDag) -> dict:
    cfg = asdict(dag.config)
    return {
        "header": {
            "version": FORMAT_VERSION,
            "dim": dag.dim,
            "epsilon": dag.eps,
            "lambda_prime": dag.consts.lam_outer,
            "lambda_double_prime": dag.consts.lam_inner,
            "seed": dag.config.seed,
        },
        "config": cfg,
        "instance": instance_to_dict(dag.source),
        "domain": {
            "center": dag.domain.center.tolist(),
            "radius": dag.domain.radius,
            "inner_radius": dag.domain.inner_radius,
        },
        "roots": list(dag.roots),
        "stats": dag.build_stats.to_json(),
        "nodes": [_node_to_json(nd) for nd in dag.nodes],
    }


def dag_from_json(doc, source: str = "<structure>") -> AvdDag:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: expected a JSON object")
    try:
        head = doc["header"]
        if head.get("version") != FORMAT_VERSION:
            raise ParseError(f"{source}: unsupported format version {head.get('version')!r}")
        S = instance_from_dict(doc["instance"], source)
        dim = int(head["dim"])
        if dim != S.dim:
            raise ParseError(f"{source}: header dimension {dim} does not match the instance")
        config = BuildConfig(**doc.get("config", {}))
        dom = doc["domain"]
        domain = DomainBall(np.asarray(dom["center"], dtype=float), float(dom["radius"]), float(dom["inner_radius"]))
        nodes = [_node_from_json(nd, k, dim) for k, nd in enumerate(doc["nodes"])]
        roots = [int(r) for r in doc["roots"]]
        stats = BuildStats.from_json(doc["stats"])
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ParseError(f"{source}: {msg}") from exc
    n = len(nodes)
    for nd in nodes:
        bad = [c for c in nd.children if not 0 <= c < n]
        if bad:
            raise ParseError(f"{source}: node {nd.id}: child {bad[0]} does not exist")
        if nd.kind == FINAL_LEAF and not (isinstance(nd.representative, int) and 0 <= nd.representative < S.n):
            raise ParseError(f"{source}: node {nd.id}: invalid representative")
    if not roots or any(not 0 <= r < n for r in roots):
        raise ParseError(f"{source}: invalid root list")
    return AvdDag(S, float(head["epsilon"]), config, domain, nodes, roots, stats)


def serialize(dag: AvdDag, sink) -> None:
    """Write ``dag`` as JSON to a path or a text file object."""
    text = json.dumps(dag_to_json(dag), separators=(",", ":"))
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w") as fh:
            fh.write(text)


def deserialize(source) -> AvdDag:
    """Read a structure written by :func:`serialize` from a path or file object."""
    name = getattr(source, "name", str(source))
    try:
        if hasattr(source, "read"):
            doc = json.load(source)
        else:
            with open(source) as fh:
                doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{name}: line {exc.lineno}: {exc.msg}") from exc
    return dag_from_json(doc, name)
