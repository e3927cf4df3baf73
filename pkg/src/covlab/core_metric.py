"""Finite samples of compact length spaces.

Every space carried around by covlab is a :class:`FiniteMetricSpace`: a full
distance matrix over a finite point set, a mesh scale and per-point measure
weights.  Distances are always shortest paths in some weighted graph, so a
sample is an honest length space approximation.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from covlab.errors import BudgetExceeded, CovlabError, DisconnectedError, MetricViolation

DEFAULT_POINT_BUDGET = 6000
_BUDGET = contextvars.ContextVar("covlab_point_budget", default=DEFAULT_POINT_BUDGET)


def current_point_budget() -> int:
    return _BUDGET.get()


@contextlib.contextmanager
def point_budget_scope(n: Optional[int]):
    """Override the default point budget for builders called inside the block."""
    token = _BUDGET.set(DEFAULT_POINT_BUDGET if n is None else int(n))
    try:
        yield
    finally:
        _BUDGET.reset(token)
CHAIN_FACTOR = 2.5


@dataclass
class MetricGraph:
    """A finite graph with positive edge lengths.

    ``edges`` holds ``(u, v, length)`` triples; ``labels`` may carry chart
    coordinates for each vertex.
    """

    n_vertices: int
    edges: list
    labels: Optional[list] = None
    units: str = "length"

    def __post_init__(self):
        for u, v, length in self.edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise CovlabError(f"edge ({u}, {v}) references a missing vertex")
            if not length > 0:
                raise CovlabError(f"edge ({u}, {v}) has nonpositive length {length}")

    def components(self):
        if not self.edges:
            return [[i] for i in range(self.n_vertices)]
        u, v, _ = zip(*self.edges)
        adj = coo_matrix(
            (np.ones(len(u)), (np.array(u), np.array(v))),
            shape=(self.n_vertices, self.n_vertices),
        )
        ncomp, lab = connected_components(adj, directed=False)
        return [np.flatnonzero(lab == c).tolist() for c in range(ncomp)]


@dataclass
class FiniteMetricSpace:
    dist: np.ndarray
    weights: Optional[np.ndarray] = None
    coords: Optional[np.ndarray] = None
    mesh: Optional[float] = None
    orientation: Optional[np.ndarray] = None
    units: str = "length"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dist = np.ascontiguousarray(self.dist, dtype=np.float64)
        n = self.dist.shape[0]
        if self.dist.shape != (n, n):
            raise CovlabError("distance matrix must be square")
        if self.weights is None:
            self.weights = np.full(n, 1.0 / max(n, 1))
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (n,) or np.any(self.weights < 0):
            raise CovlabError("weights must be a nonnegative vector, one per point")
        if self.orientation is not None:
            self.orientation = np.asarray(self.orientation, dtype=np.float64)
        if self.mesh is None:
            self.mesh = nearest_neighbor_mesh(self.dist)

    def __len__(self):
        return self.dist.shape[0]

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def step(self) -> float:
        """Chain-graph edge scale."""
        return CHAIN_FACTOR * self.mesh

    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def volume(self) -> float:
        return float(self.weights.sum())

    def signed_weights(self) -> np.ndarray:
        if self.orientation is None:
            return self.weights
        return self.weights * self.orientation

    def subspace(self, idx) -> "FiniteMetricSpace":
        """Restricted metric on a subset (not re-closed)."""
        idx = np.asarray(idx, dtype=np.int64)
        return FiniteMetricSpace(
            self.dist[np.ix_(idx, idx)],
            weights=self.weights[idx],
            coords=None if self.coords is None else self.coords[idx],
            orientation=None if self.orientation is None else self.orientation[idx],
            units=self.units,
        )


@dataclass
class Identification:
    """Pairs ``(a_i, b_i)`` glued together; bijective onto their images."""

    pairs: list
    tol: float = 1e-6

    def reversed(self) -> "Identification":
        return Identification([(b, a) for a, b in self.pairs], self.tol)


@dataclass
class InvolutionAction:
    """Fixed-point-free involution given as a permutation array."""

    sigma: np.ndarray
    tol: float = 1e-6

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.int64)

    def residual(self, space: FiniteMetricSpace) -> float:
        s = self.sigma
        return float(np.abs(space.dist - space.dist[np.ix_(s, s)]).max())


def nearest_neighbor_mesh(dist: np.ndarray) -> float:
    n = dist.shape[0]
    if n < 2:
        return 0.0
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).max())


def metric_from_graph(graph: MetricGraph, subdivision: float) -> FiniteMetricSpace:
    if not subdivision > 0:
        raise CovlabError(f"subdivision must be positive, got {subdivision}")
    comps = graph.components()
    if len(comps) > 1:
        raise DisconnectedError(comps)
    n = graph.n_vertices
    rows, cols, lens = [], [], []
    weights = [0.0] * n
    provenance = [("vertex", i, 0.0) for i in range(n)]
    for e, (u, v, length) in enumerate(graph.edges):
        k = max(1, int(np.ceil(length / subdivision - 1e-12)))
        piece = length / k
        chain = [u]
        for t in range(1, k):
            chain.append(n)
            provenance.append(("edge", e, t / k))
            weights.append(0.0)
            n += 1
        chain.append(v)
        for a, b in zip(chain[:-1], chain[1:]):
            rows.append(a)
            cols.append(b)
            lens.append(piece)
            weights[a] += piece / 2
            weights[b] += piece / 2
    if n == 1:
        dist = np.zeros((1, 1))
    else:
        dist = graph_distances(n, rows, cols, lens)
    space = FiniteMetricSpace(dist, weights=np.array(weights), units=graph.units)
    space.meta["provenance"] = provenance
    space.meta["graph_derived"] = True
    return space


def graph_distances(n, rows, cols, lens) -> np.ndarray:
    """Shortest paths; parallel edges keep their minimum length."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    lens = np.asarray(lens, dtype=np.float64)
    a = np.minimum(rows, cols)
    b = np.maximum(rows, cols)
    order = np.lexsort((lens, b, a))
    a, b, lens = a[order], b[order], lens[order]
    keep = np.ones(len(a), dtype=bool)
    keep[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    a, b, lens = a[keep], b[keep], lens[keep]
    adj = coo_matrix((np.r_[lens, lens], (np.r_[a, b], np.r_[b, a])), shape=(n, n)).tocsr()
    ncomp, lab = connected_components(adj, directed=False)
    if ncomp > 1:
        raise DisconnectedError([np.flatnonzero(lab == c) for c in range(ncomp)])
    return shortest_path(adj, method="D", directed=False)


def ball(space: FiniteMetricSpace, center: int, radius: float) -> set:
    """Open ball: points strictly closer than ``radius``."""
    if radius < 0:
        raise CovlabError("radius must be nonnegative")
    return set(np.flatnonzero(space.dist[center] < radius).tolist())


def glue(a: FiniteMetricSpace, b: FiniteMetricSpace, ident: Identification) -> FiniteMetricSpace:
    """Glue ``b`` onto ``a`` along identified point pairs.

    Points of ``a`` keep their indices; unidentified points of ``b`` follow
    in order.  The identified set is closed under the length metric first,
    then distances are extended by min-plus products through it.
    """
    if not ident.pairs:
        raise CovlabError("gluing needs at least one identified pair")
    ia = np.array([p for p, _ in ident.pairs], dtype=np.int64)
    ib = np.array([q for _, q in ident.pairs], dtype=np.int64)
    if len(set(ia.tolist())) != len(ia) or len(set(ib.tolist())) != len(ib):
        raise CovlabError("only bijective identifications are supported")
    da = a.dist[np.ix_(ia, ia)]
    db = b.dist[np.ix_(ib, ib)]
    resid = float(np.abs(da - db).max())
    if resid > ident.tol:
        raise MetricViolation("identification does not preserve distances", resid)

    m = np.minimum(da, db)
    m = _minplus_closure(m)

    # A-A and B-B distances through the glued set
    a_to_i = a.dist[:, ia]
    b_to_i = b.dist[:, ib]
    a_via = _minplus(a_to_i, m)            # a -> glued point (through glued set)
    b_via = _minplus(b_to_i, m)
    daa = np.minimum(a.dist, _minplus(a_via, a_to_i.T))
    dbb = np.minimum(b.dist, _minplus(b_via, b_to_i.T))
    dab = _minplus(a_via, b_to_i.T)

    keep_b = np.setdiff1d(np.arange(b.n), ib)
    na = a.n
    # index map for b points in the result
    bmap = np.empty(b.n, dtype=np.int64)
    bmap[ib] = ia
    bmap[keep_b] = na + np.arange(len(keep_b))

    n = na + len(keep_b)
    dist = np.empty((n, n))
    dist[:na, :na] = daa
    dist[:na, na:] = dab[:, keep_b]
    dist[na:, :na] = dab[:, keep_b].T
    dist[na:, na:] = dbb[np.ix_(keep_b, keep_b)]
    # the glued set itself: min over both sides for a-points in ia
    dist[np.ix_(ia, ia)] = m
    dist = np.minimum(dist, dist.T)

    weights = np.zeros(n)
    weights[:na] = a.weights
    weights[na:] = b.weights[keep_b]
    # identified points are shared; average their measure to avoid double counting
    weights[ia] = 0.5 * (a.weights[ia] + b.weights[ib])

    orient = None
    if a.orientation is not None or b.orientation is not None:
        oa = a.orientation if a.orientation is not None else np.ones(a.n)
        ob = b.orientation if b.orientation is not None else np.ones(b.n)
        orient = np.empty(n)
        orient[:na] = oa
        orient[na:] = ob[keep_b]
    out = FiniteMetricSpace(dist, weights=weights, orientation=orient, units=a.units)
    out.meta["b_index_map"] = bmap
    return out


def _minplus(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(min,+) matrix product, looping over the shared (short) dimension."""
    out = np.full((x.shape[0], y.shape[1]), np.inf)
    for k in range(x.shape[1]):
        np.minimum(out, x[:, k, None] + y[None, k, :], out=out)
    return out


def _minplus_closure(m: np.ndarray) -> np.ndarray:
    m = m.copy()
    for k in range(m.shape[0]):
        np.minimum(m, m[:, k, None] + m[None, k, :], out=m)
    return m


def product_l2(
    a: FiniteMetricSpace, b: FiniteMetricSpace, point_budget: Optional[int] = None
) -> FiniteMetricSpace:
    """Isometric (l2) product; point ``(i, k)`` has index ``i * len(b) + k``."""
    if a.n == 0 or b.n == 0:
        raise CovlabError("product factors must be nonempty")
    n = a.n * b.n
    if n > (point_budget or current_point_budget()):
        raise BudgetExceeded("product too large for the point budget", n)
    d2 = (a.dist**2)[:, None, :, None] + (b.dist**2)[None, :, None, :]
    dist = np.sqrt(d2).reshape(n, n)
    weights = np.outer(a.weights, b.weights).ravel()
    coords = None
    if a.coords is not None and b.coords is not None:
        ca = np.repeat(a.coords.reshape(a.n, -1), b.n, axis=0)
        cb = np.tile(b.coords.reshape(b.n, -1), (a.n, 1))
        coords = np.hstack([ca, cb])
    mesh = float(np.hypot(a.mesh, b.mesh))
    out = FiniteMetricSpace(dist, weights=weights, coords=coords, mesh=mesh, units=a.units)
    out.meta["factors"] = (a.n, b.n)
    out.meta["product_factors"] = (a, b)
    return out


def quotient_by_involution(space: FiniteMetricSpace, action: InvolutionAction) -> FiniteMetricSpace:
    """Orbit space of a fixed-point-free isometric involution."""
    s = action.sigma
    n = space.n
    if s.shape != (n,) or np.any(s[s] != np.arange(n)):
        raise CovlabError("sigma must be an involutive permutation of the points")
    if np.any(s == np.arange(n)):
        raise CovlabError(f"involution has fixed points: {np.flatnonzero(s == np.arange(n))[:10].tolist()}")
    resid = action.residual(space)
    if resid > action.tol:
        raise MetricViolation("involution is not an isometry of the sample", resid)
    reps = np.flatnonzero(np.arange(n) < s)
    d = np.minimum(space.dist[np.ix_(reps, reps)], space.dist[np.ix_(reps, s[reps])])
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    report = check_metric_axioms(FiniteMetricSpace(d, mesh=space.mesh), tol=1e-9)
    mesh = space.mesh
    if not report.passed:
        if report.triangle_violation > 3 * mesh:
            raise MetricViolation("quotient breaks the triangle inequality", report.triangle_violation)
        d = _minplus_closure(d)
    weights = space.weights[reps] + space.weights[s[reps]]
    coords = space.coords[reps] if space.coords is not None else None
    out = FiniteMetricSpace(d, weights=weights, coords=coords, units=space.units)
    out.meta["orbit_reps"] = reps
    return out


@dataclass
class AxiomReport:
    symmetry_residual: float
    triangle_violation: float
    zero_offdiagonal: int
    negative_entries: int
    tol: float
    method: str = "exact"

    @property
    def passed(self) -> bool:
        return (
            self.symmetry_residual <= self.tol
            and self.triangle_violation <= self.tol
            and self.zero_offdiagonal == 0
            and self.negative_entries == 0
        )


@njit(cache=True)
def _triangle_violation(d):
    n = d.shape[0]
    worst = 0.0
    for k in range(n):
        for i in range(n):
            dik = d[i, k]
            for j in range(n):
                v = d[i, j] - dik - d[k, j]
                if v > worst:
                    worst = v
    return worst


@njit(cache=True)
def _bellman_certificate(d, indptr, indices, lens, tol):
    """Feasibility and tightness of d against a graph's edge lengths.

    If d[i, j] <= d[i, k] + w(k, j) on every edge and each entry is attained
    through some neighbour, d is that graph's shortest-path metric.
    """
    n = d.shape[0]
    worst = 0.0
    tight = True
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dij = d[i, j]
            hit = False
            for k in range(indptr[j], indptr[j + 1]):
                v = dij - d[i, indices[k]] - lens[k]
                if v > worst:
                    worst = v
                if abs(v) <= tol:
                    hit = True
            if not hit:
                tight = False
    return worst, tight


EXACT_SCAN_LIMIT = 1500


def _product_residual(d, da, db) -> float:
    """Max deviation of d from the l2 combination of the factor metrics."""
    na, nb = len(da), len(db)
    worst = 0.0
    for i in range(na):
        expect = np.sqrt(da[i][None, :, None] ** 2 + db[:, None, :] ** 2)
        rows = d[i * nb:(i + 1) * nb].reshape(nb, na, nb)
        worst = max(worst, float(np.abs(rows - expect).max()))
    return worst


def check_metric_axioms(space, tol: float = 1e-9) -> AxiomReport:
    """Symmetry, positivity and triangle inequality of a distance matrix.

    Small inputs get the exact triple scan.  Larger sampled surfaces carry
    their local graph; a matrix that is exactly that graph's shortest-path
    metric satisfies the triangle inequality, which is certified in
    O(n^2 * degree).
    """
    d = space.dist if isinstance(space, FiniteMetricSpace) else np.asarray(space, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    n = d.shape[0]
    # infinite entries (disjoint unions) must match exactly; finite ones within tol
    fin = np.isfinite(d) & np.isfinite(d.T)
    sym = float(np.abs(d[fin] - d.T[fin]).max()) if n else 0.0
    if np.any(np.isinf(d) != np.isinf(d.T)):
        sym = math.inf
    off = ~np.eye(n, dtype=bool)
    zeros = int(np.count_nonzero(d[off] == 0.0))
    neg = int(np.count_nonzero(d < 0))
    lg = space.meta.get("local_graph") if isinstance(space, FiniteMetricSpace) else None
    if n > EXACT_SCAN_LIMIT and lg is not None and np.all(np.isfinite(d)):
        rows, cols, lens = lg
        r2, c2, l2 = np.r_[rows, cols], np.r_[cols, rows], np.r_[lens, lens]
        order = np.lexsort((l2, c2, r2))
        r2, c2, l2 = r2[order], c2[order], l2[order]
        # parallel edges: keep the shortest
        first = np.r_[True, (r2[1:] != r2[:-1]) | (c2[1:] != c2[:-1])]
        r2, c2, l2 = r2[first], c2[first], l2[first]
        indptr = np.r_[0, np.cumsum(np.bincount(r2, minlength=n))].astype(np.int64)
        worst, tight = _bellman_certificate(d, indptr, c2.astype(np.int64), l2.astype(np.float64),
                                            max(tol, 1e-9))
        if tight:
            return AxiomReport(sym, float(worst), zeros, neg, tol, method="graph-certificate")
    pf = space.meta.get("product_factors") if isinstance(space, FiniteMetricSpace) else None
    if n > EXACT_SCAN_LIMIT and pf is not None:
        fa, fb = pf
        resid = _product_residual(d, fa.dist, fb.dist)
        if resid <= max(tol, 1e-12):
            # Minkowski: violations of the factors combine in l2
            ra, rb = check_metric_axioms(fa, tol), check_metric_axioms(fb, tol)
            tri = math.hypot(ra.triangle_violation, rb.triangle_violation) + resid
            return AxiomReport(sym, tri, zeros, neg, tol, method="product-certificate")
    tri = float(_triangle_violation(d)) if n else 0.0
    return AxiomReport(sym, tri, zeros, neg, tol)


def circle(circumference: float, subdivision: float) -> FiniteMetricSpace:
    """Cycle graph realization of a round circle."""
    third = circumference / 3
    g = MetricGraph(3, [(0, 1, third), (1, 2, third), (2, 0, third)])
    return metric_from_graph(g, subdivision)


def segment(length: float, subdivision: float) -> FiniteMetricSpace:
    return metric_from_graph(MetricGraph(2, [(0, 1, length)]), subdivision)


def point_space() -> FiniteMetricSpace:
    return FiniteMetricSpace(np.zeros((1, 1)), weights=np.ones(1), mesh=0.0)


def figure_eight(len1: float, len2: float, subdivision: float) -> FiniteMetricSpace:
    """Two loops wedged at vertex 0."""
    a, b = len1 / 2, len2 / 2
    g = MetricGraph(3, [(0, 1, a), (1, 0, a), (0, 2, b), (2, 0, b)])
    return metric_from_graph(g, subdivision)


def disjoint_union(spaces: Sequence[FiniteMetricSpace]) -> FiniteMetricSpace:
    """Disjoint union with infinite cross distances (components tracked)."""
    n = sum(s.n for s in spaces)
    dist = np.full((n, n), np.inf)
    weights = np.empty(n)
    off = 0
    comps = []
    for s in spaces:
        dist[off:off + s.n, off:off + s.n] = s.dist
        weights[off:off + s.n] = s.weights
        comps.append(list(range(off, off + s.n)))
        off += s.n
    out = FiniteMetricSpace(dist, weights=weights, mesh=max(s.mesh for s in spaces))
    out.meta["components"] = comps
    return out
