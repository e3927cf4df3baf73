"""Truncated delta-covers of sampled length spaces."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from covlab.core_metric import FiniteMetricSpace
from covlab.covers import _kernel
from covlab.covers.chain import ChainGraph, chain_complex, chain_graph, min_resolvable_delta
from covlab.errors import CovlabError, ResolutionError

DEFAULT_NODE_BUDGET = int(os.environ.get("COVLAB_NODE_BUDGET", 400_000))


@dataclass
class TruncatedCover:
    """Lift classes grown from basepoint lift(s), truncated at radius R.

    ``projection[i]`` is the base point under node ``i``; ``edges`` are
    ``(i, j, length)`` with ``i < j``; ``dist`` holds lifted distances from
    the nearest basepoint lift.  ``closed`` means nothing was left unexpanded,
    so the cover is finite and fully built.
    """

    delta: float
    radius: float
    projection: np.ndarray
    edges: np.ndarray          # (m, 2) int
    edge_lengths: np.ndarray
    basepoints: np.ndarray     # node ids of basepoint lifts
    dist: np.ndarray
    frontier: np.ndarray       # bool per node: not expanded
    budget_hit: bool
    n_base: int
    step: float
    merges: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.projection)

    @property
    def closed(self) -> bool:
        return not self.budget_hit and not self.frontier.any()

    @property
    def complete_within_r(self) -> bool:
        """No unexpanded node closer than R to a basepoint lift."""
        if self.budget_hit:
            return False
        return not np.any(self.frontier & (self.dist < self.radius))

    def within(self, radius: Optional[float] = None) -> np.ndarray:
        r = self.radius if radius is None else radius
        return self.dist <= r

    def lift_profile(self, radius: Optional[float] = None) -> np.ndarray:
        """Lifts over every base point within the truncation radius."""
        mask = self.within(radius)
        return np.bincount(self.projection[mask], minlength=self.n_base)

    def adjacency(self):
        m = len(self.edges)
        n = self.n_nodes
        if m == 0:
            return coo_matrix((n, n)).tocsr()
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.edge_lengths
        return coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()

    def distances_from(self, nodes) -> np.ndarray:
        return dijkstra(self.adjacency(), directed=False, indices=np.atleast_1d(nodes))


def _as_array(basepoint) -> np.ndarray:
    return np.atleast_1d(np.asarray(basepoint, dtype=np.int64))


def truncated_cover(
    space: FiniteMetricSpace,
    delta: float,
    basepoint: Union[int, Sequence[int]] = 0,
    R: float = 10.0,
    node_budget: int = DEFAULT_NODE_BUDGET,
    flood_margin: Optional[float] = None,
    order_seed: Optional[int] = None,
) -> TruncatedCover:
    """Grow the delta-cover from the basepoint lift out to radius ``R``.

    Several basepoints may be given (one per component of a disjoint union);
    each seeds its own lift.  Nodes are expanded out to ``R + margin`` (default
    delta + 2 step, the reach of a relator through a node just inside R) so
    identifications forced from just outside ``R`` are seen.
    """
    if not R > 0:
        raise CovlabError("truncation radius must be positive")
    bps = _as_array(basepoint)
    if len(bps) == 1:
        cplx = chain_complex(space, delta)
        cg = cplx.graph
    else:
        need = min_resolvable_delta(space)
        if not delta > need:
            raise ResolutionError(f"delta={delta:.6g} is not resolvable", need)
        cg = chain_graph(space)
    margin = delta + 2.0 * cg.step if flood_margin is None else flood_margin
    if order_seed is None:
        jitter = np.zeros(space.n)
    else:
        jitter = np.random.default_rng(order_seed).uniform(0.0, cg.step, space.n)
    status, n_nodes, base, parent, dist, flooded, nbr, stride, merges = _kernel.lift_cover(
        cg.indptr, cg.indices, cg.lengths, cg.rev, space.dist, float(delta),
        bps, float(R + margin), int(node_budget), jitter,
    )
    return _assemble(space, cg, delta, R, bps, status, n_nodes, base, parent, flooded, nbr, stride, merges)


def _assemble(space, cg: ChainGraph, delta, R, bps, status, n_nodes, base, parent, flooded, nbr, stride, merges):
    parent = parent[:n_nodes].copy()
    for u in range(n_nodes):
        r = u
        while parent[r] != r:
            r = parent[r]
        parent[u] = r
    roots = np.flatnonzero(parent == np.arange(n_nodes))
    relabel = np.full(n_nodes, -1, dtype=np.int64)
    relabel[roots] = np.arange(len(roots))
    projection = base[roots].copy()
    # flooded status may live on merged-away nodes
    fl = np.zeros(len(roots), dtype=bool)
    np.logical_or.at(fl, relabel[parent], flooded[:n_nodes])
    frontier = ~fl

    rows, cols, lens = [], [], []
    deg = np.diff(cg.indptr)
    nb = nbr[: n_nodes * stride].reshape(n_nodes, stride)
    for u in roots:
        v = base[u]
        for s in range(deg[v]):
            t = nb[u, s]
            if t < 0:
                continue
            t = parent[t]
            a, b = relabel[u], relabel[t]
            if a < b:
                rows.append(a)
                cols.append(b)
                lens.append(cg.lengths[cg.indptr[v] + s])
    edges = np.column_stack([np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)]) if rows else np.zeros((0, 2), dtype=np.int64)
    elen = np.array(lens, dtype=np.float64)
    bp_nodes = np.unique(relabel[parent[np.arange(len(bps))]])
    cover = TruncatedCover(
        delta=float(delta), radius=float(R), projection=projection, edges=edges,
        edge_lengths=elen, basepoints=bp_nodes, dist=np.zeros(len(roots)),
        frontier=frontier, budget_hit=(status == _kernel.STATUS_BUDGET),
        n_base=space.n, step=cg.step, merges=int(merges),
    )
    if len(roots):
        dd = cover.distances_from(bp_nodes)
        cover.dist = dd.min(axis=0)
    return cover


@dataclass
class LiftCount:
    count: int
    exact: bool

    @property
    def lower_bound(self) -> bool:
        return not self.exact


def lift_count(cover: TruncatedCover, base_point: int) -> LiftCount:
    prof = cover.lift_profile()
    return LiftCount(int(prof[base_point]), exact=cover.closed)


@dataclass
class LiftGrowth:
    radii: np.ndarray
    counts: np.ndarray
    kind: str            # bounded | linear | superlinear
    ratio: float         # growth over [R/2, R] divided by growth over [R/4, R/2]
    complete: bool

    @property
    def infinite_deck_group(self) -> bool:
        return self.kind != "bounded"


def lift_growth(space: FiniteMetricSpace, delta: float, radii: Sequence[float], basepoint: int = 0,
                node_budget: int = DEFAULT_NODE_BUDGET) -> LiftGrowth:
    """Lifts of the basepoint within each radius of one truncated cover."""
    radii = np.sort(np.asarray(radii, dtype=float))
    cov = truncated_cover(space, delta, basepoint=basepoint, R=float(radii[-1]), node_budget=node_budget)
    counts = np.array([int(cov.lift_profile(r)[basepoint]) for r in radii])
    top = radii[-1]

    def at(r):
        return counts[max(int(np.searchsorted(radii, r, side="right")) - 1, 0)]

    if counts[-1] == at(top / 2):
        kind, ratio = "bounded", 0.0
    else:
        early = at(top / 2) - at(top / 4)
        ratio = float((counts[-1] - at(top / 2)) / early) if early > 0 else math.inf
        # linear growth gives a ratio near 1, quadratic near 4
        kind = "linear" if ratio <= 2.0 else "superlinear"
    return LiftGrowth(radii, counts, kind, ratio, not cov.budget_hit)


@dataclass
class ComponentReport:
    n_components: int
    lifts_per_component: list    # lifts of each component's basepoint image
    sizes: list
    consistent: bool             # N1 * N2 == total lifts when closed

    @property
    def total(self) -> int:
        return int(sum(self.lifts_per_component))


def cover_components(cover: TruncatedCover) -> ComponentReport:
    ncomp, lab = connected_components(cover.adjacency(), directed=False)
    lifts, sizes = [], []
    for c in range(ncomp):
        nodes = np.flatnonzero(lab == c)
        sizes.append(len(nodes))
        bp = [b for b in cover.basepoints if lab[b] == c]
        ref = cover.projection[bp[0]] if bp else cover.projection[nodes[0]]
        lifts.append(int(np.count_nonzero(cover.projection[nodes] == ref)))
    consistent = True
    if cover.closed and ncomp:
        total_lifts = sum(lifts)
        consistent = all(x == lifts[0] for x in lifts) and total_lifts == ncomp * lifts[0]
    return ComponentReport(int(ncomp), lifts, sizes, consistent)


def local_isometry_residuals(
    cover: TruncatedCover, space: FiniteMetricSpace, n_pairs: int = 100, seed: int = 0
):
    """Sample lift pairs closer than delta/2 and compare with base distances."""
    rng = np.random.default_rng(seed)
    inside = np.flatnonzero(~cover.frontier) if (~cover.frontier).any() else np.arange(cover.n_nodes)
    adj = cover.adjacency()
    out = []
    tries = 0
    while len(out) < n_pairs and tries < 20 * n_pairs:
        tries += 1
        u = int(rng.choice(inside))
        du = dijkstra(adj, directed=False, indices=u, limit=cover.delta / 2)
        near = np.flatnonzero(np.isfinite(du) & (du < cover.delta / 2))
        near = near[near != u]
        if len(near) == 0:
            continue
        v = int(rng.choice(near))
        out.append(abs(du[v] - space.dist[cover.projection[u], cover.projection[v]]))
    return np.array(out)


def relator_closure_defects(cover: TruncatedCover, space: FiniteMetricSpace, max_nodes: int = 200) -> int:
    """Count expanded nodes whose ball relator fails to lift injectively."""
    d = space.dist
    adj = cover.adjacency().tolil()
    defects = 0
    nodes = np.flatnonzero(~cover.frontier & (cover.dist <= cover.radius))[:max_nodes]
    for u in nodes:
        a = cover.projection[u]
        seen = {}
        stack = [u]
        seen[a] = u
        bad = False
        visited = {u}
        while stack and not bad:
            p = stack.pop()
            bp = cover.projection[p]
            for q, ell in zip(adj.rows[p], adj.data[p]):
                x = cover.projection[q]
                if d[a, x] >= cover.delta or 0.5 * (d[a, bp] + d[a, x] + ell) >= cover.delta:
                    continue
                if x in seen and seen[x] != q:
                    bad = True
                    break
                if q not in visited:
                    visited.add(q)
                    seen[x] = q
                    stack.append(q)
        defects += bad
    return defects
