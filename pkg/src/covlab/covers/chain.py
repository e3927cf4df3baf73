"""Chain graphs and ball relators at a scale delta."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from covlab.core_metric import FiniteMetricSpace
from covlab.errors import DisconnectedError, ResolutionError

RESOLUTION_FACTOR = 4.0


@dataclass
class ChainGraph:
    """CSR chain graph: edges between points at distance <= step."""

    indptr: np.ndarray
    indices: np.ndarray
    lengths: np.ndarray
    rev: np.ndarray       # rev[k] = slot of the reverse half-edge
    step: float

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def max_degree(self) -> int:
        return int(np.diff(self.indptr).max()) if self.n else 0

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def edge_list(self):
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = rows < self.indices
        return rows[keep], self.indices[keep], self.lengths[keep]


def chain_graph(space: FiniteMetricSpace) -> ChainGraph:
    """Chain graph of a sample; cached on the space."""
    cached = space.meta.get("_chain")
    if cached is not None:
        return cached
    step = space.step
    d = space.dist
    mask = (d <= step * (1 + 1e-12)) & ~np.eye(space.n, dtype=bool)
    # built from explicit coordinates so zero-length entries survive
    mat = csr_matrix((d[mask], np.nonzero(mask)), shape=d.shape)
    mat.sort_indices()
    indptr = mat.indptr.astype(np.int64)
    indices = mat.indices.astype(np.int64)
    lengths = mat.data.astype(np.float64)
    rev = np.empty_like(indices)
    for v in range(space.n):
        for k in range(indptr[v], indptr[v + 1]):
            x = indices[k]
            lo, hi = indptr[x], indptr[x + 1]
            rev[k] = lo + np.searchsorted(indices[lo:hi], v)
    cg = ChainGraph(indptr, indices, lengths, rev, step)
    space.meta["_chain"] = cg
    return cg


def chain_components(cg: ChainGraph):
    mat = csr_matrix((np.ones(len(cg.indices)), cg.indices, cg.indptr), shape=(cg.n, cg.n))
    ncomp, lab = connected_components(mat, directed=False)
    return ncomp, lab


@dataclass
class ChainComplexAtScale:
    space: FiniteMetricSpace
    delta: float
    graph: ChainGraph

    @property
    def step(self) -> float:
        return self.graph.step

    def edge_in_ball(self, w: int, p: int, x: int, length: float) -> bool:
        # farthest point of the segment px from w, in the length metric
        d = self.space.dist[w]
        return d[p] < self.delta and d[x] < self.delta and 0.5 * (d[p] + d[x] + length) < self.delta

    def relator(self, w: int):
        """Vertices and edges of the ball relator at witness ``w``.

        The relator is the component of ``w`` in the chain subgraph whose
        vertices and whole edge segments lie in the open ball B(w, delta).
        """
        d = self.space.dist[w]
        g = self.graph
        seen = {w}
        stack = [w]
        edges = set()
        while stack:
            p = stack.pop()
            for k in range(g.indptr[p], g.indptr[p + 1]):
                x = int(g.indices[k])
                if d[x] >= self.delta or 0.5 * (d[p] + d[x] + g.lengths[k]) >= self.delta:
                    continue
                edges.add((min(p, x), max(p, x)))
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        return sorted(seen), sorted(edges)

    def relator_cycle_rank(self, w: int) -> int:
        vs, es = self.relator(w)
        return len(es) - len(vs) + 1


def min_resolvable_delta(space: FiniteMetricSpace) -> float:
    return RESOLUTION_FACTOR * space.step


def chain_complex(space: FiniteMetricSpace, delta: float) -> ChainComplexAtScale:
    need = min_resolvable_delta(space)
    if not delta > need:
        raise ResolutionError(f"delta={delta:.6g} is not resolvable at mesh {space.mesh:.6g}", need)
    cg = chain_graph(space)
    ncomp, lab = chain_components(cg)
    if ncomp > 1:
        raise DisconnectedError([np.flatnonzero(lab == c) for c in range(ncomp)])
    return ChainComplexAtScale(space, float(delta), cg)
