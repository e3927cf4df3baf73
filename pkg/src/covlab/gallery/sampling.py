"""Ring sampling of warped surfaces and assembly of local-length graphs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from covlab.core_metric import FiniteMetricSpace, current_point_budget, graph_distances
from covlab.errors import BudgetExceeded, CovlabError
from covlab.gallery.profiles import WarpingProfile

# local edges are kept up to this multiple of the mesh
LOCAL_FACTOR = 2.6
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


@dataclass
class RingLayout:
    r: np.ndarray           # ring positions
    sizes: np.ndarray       # points per ring (1 = collapsed)
    weights: np.ndarray     # total volume carried by each ring
    period: Optional[float] = None
    signed: Optional[np.ndarray] = None   # oriented volume of each ring, when requested


def _ring_positions(profile: WarpingProfile, mesh: float, period: Optional[float]):
    # every breakpoint is a ring, segments split into an even number of pieces
    # so each midpoint is a ring and mirror-symmetric profiles sample symmetrically
    pts = profile.breakpoints
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(2, int(math.ceil((b - a) / mesh - 1e-9)))
        k += k % 2
        out.append(np.linspace(a, b, k + 1)[:-1])
    r = np.concatenate(out)
    if period is None:
        r = np.append(r, pts[-1])
    return r


def _integrate(density: Callable, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
    return float(0.5 * (b - a) * np.dot(_GL_W, density(x)))


def ring_layout(profile: WarpingProfile, mesh: float, periodic: bool = False,
                orientation: Optional[Callable] = None) -> RingLayout:
    if not mesh > 0:
        raise CovlabError(f"mesh must be positive, got {mesh}")
    profile.check_nonnegative()
    lo, hi = profile.domain
    period = hi - lo if periodic else None
    r = _ring_positions(profile, mesh, period)
    f = profile(r)
    sizes = np.where(2 * math.pi * f < 0.5 * mesh, 1, np.maximum(4, np.ceil(2 * math.pi * f / mesh)))
    sizes = (sizes + (sizes > 1) * (sizes % 2)).astype(np.int64)   # even rings
    # Voronoi cells in r, integrated against the full volume density
    m = len(r)
    if periodic:
        prev = np.roll(r, 1)
        prev[0] -= period
        nxt = np.roll(r, -1)
        nxt[-1] += period
    else:
        prev = np.r_[r[0], r[:-1]]
        nxt = np.r_[r[1:], r[-1]]
    a = 0.5 * (prev + r)
    b = 0.5 * (r + nxt)
    w = np.empty(m)

    def dens(x):
        if periodic:
            x = lo + np.mod(x - lo, period)
        return profile.density(x)

    for k in range(m):
        w[k] = _integrate(dens, a[k], r[k]) + _integrate(dens, r[k], b[k])
    signed = None
    if orientation is not None:
        # each half cell lies inside one segment, where the orientation is smooth
        def sdens(x):
            y = lo + np.mod(x - lo, period) if periodic else x
            return dens(x) * np.asarray(orientation(y), dtype=float)

        signed = np.array([_integrate(sdens, a[k], r[k]) + _integrate(sdens, r[k], b[k]) for k in range(m)])
    return RingLayout(r, sizes, w, period, signed)


@dataclass
class LocalGraph:
    """Points plus local edges whose lengths approximate the length metric."""

    rows: List[np.ndarray] = field(default_factory=list)
    cols: List[np.ndarray] = field(default_factory=list)
    lens: List[np.ndarray] = field(default_factory=list)

    def add(self, i, j, ell):
        self.rows.append(np.asarray(i, dtype=np.int64))
        self.cols.append(np.asarray(j, dtype=np.int64))
        self.lens.append(np.asarray(ell, dtype=np.float64))

    def arrays(self):
        if not self.rows:
            return (np.zeros(0, np.int64),) * 2 + (np.zeros(0),)
        return np.concatenate(self.rows), np.concatenate(self.cols), np.concatenate(self.lens)


def ring_points(layout: RingLayout):
    """Flat (ring index, theta) arrays for a layout; theta offsets are zero."""
    ring = np.repeat(np.arange(len(layout.r)), layout.sizes)
    start = np.r_[0, np.cumsum(layout.sizes)[:-1]]
    slot = np.arange(len(ring)) - start[ring]
    theta = 2 * math.pi * slot / layout.sizes[ring]
    return ring, theta, start


def ring_edges(layout: RingLayout, profile: WarpingProfile, mesh: float, offset: int = 0,
               window: int = 2) -> LocalGraph:
    """Edges between rings at most ``window`` apart, length sqrt(dr^2 + f^2 dtheta^2)."""
    g = LocalGraph()
    ring, theta, start = ring_points(layout)
    m = len(layout.r)
    cut = LOCAL_FACTOR * mesh
    for k in range(m):
        for d in range(0, window + 1):
            k2 = k + d
            dr_shift = 0.0
            if k2 >= m:
                if layout.period is None:
                    continue
                k2 -= m
                dr_shift = layout.period
            if d == 0:
                pairs_i, pairs_j = np.triu_indices(layout.sizes[k], 1)
            else:
                pairs_i, pairs_j = np.meshgrid(np.arange(layout.sizes[k]), np.arange(layout.sizes[k2]),
                                               indexing="ij")
                pairs_i, pairs_j = pairs_i.ravel(), pairs_j.ravel()
            if len(pairs_i) == 0:
                continue
            ia = start[k] + pairs_i
            ib = start[k2] + pairs_j
            r1 = layout.r[k]
            r2 = layout.r[k2] + dr_shift
            dr = abs(r2 - r1)
            rm = 0.5 * (r1 + r2)
            if layout.period is not None:
                lo = profile.domain[0]
                rm = lo + (rm - lo) % layout.period
            fm = float(profile(np.array([rm]))[0])
            dth = np.abs(theta[ia] - theta[ib])
            dth = np.minimum(dth, 2 * math.pi - dth)
            if layout.sizes[k] == 1 or layout.sizes[k2] == 1:
                dth = np.zeros_like(dth)
            ell = np.sqrt(dr * dr + (fm * dth) ** 2)
            keep = ell <= cut
            if d == 1:
                # adjacent rings always stay linked to their nearest partner
                keep |= ell <= ell.min() * (1 + 1e-9)
            g.add(ia[keep] + offset, ib[keep] + offset, ell[keep])
    return g


def finalize(n: int, graph: LocalGraph, weights, coords=None, orientation=None,
             mesh=None, meta=None, units="length") -> FiniteMetricSpace:
    rows, cols, lens = graph.arrays()
    dist = graph_distances(n, rows, cols, lens)
    meta = dict(meta or {})
    meta["local_graph"] = (rows, cols, lens)
    return FiniteMetricSpace(dist, weights=weights, coords=coords, orientation=orientation,
                             mesh=mesh, units=units, meta=meta)


def sample_surface_of_revolution(
    profile: WarpingProfile,
    mesh: float,
    periodic: bool = False,
    orientation: Optional[Callable] = None,
    point_budget: Optional[int] = None,
) -> FiniteMetricSpace:
    """Sample dr^2 + f(r)^2 dtheta^2 on rings spaced at most ``mesh`` apart.

    Rings where the fiber is shorter than half a mesh collapse to a single
    point.  Weights carry the profile's full volume density, so suppressed
    fibers show up in the weights but not in the distances.  An
    ``orientation`` callable of r is averaged over each ring's cell.
    """
    layout = ring_layout(profile, mesh, periodic, orientation)
    n = int(layout.sizes.sum())
    if n > (point_budget or current_point_budget()):
        raise BudgetExceeded(f"surface sample needs {n} points", n)
    ring, theta, start = ring_points(layout)
    weights = layout.weights[ring] / layout.sizes[ring]
    graph = ring_edges(layout, profile, mesh)
    orient = None
    if orientation is not None:
        # orientation of a point is the mean sign over its cell
        with np.errstate(invalid="ignore", divide="ignore"):
            ring_sign = np.where(layout.weights > 0, layout.signed / layout.weights,
                                 np.asarray(orientation(layout.r), dtype=float))
        orient = ring_sign[ring]
    coords = np.column_stack([layout.r[ring], theta])
    meta = {"family": profile.name, "ring": ring, "ring_r": layout.r, "ring_start": start,
            "ring_sizes": layout.sizes, "periodic": periodic}
    return finalize(n, graph, weights, coords=coords, orientation=orient, meta=meta)
