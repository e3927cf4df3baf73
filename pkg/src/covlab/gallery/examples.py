"""Example families M_j, their claimed limits, and j-indexed sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from covlab.core_metric import (
    FiniteMetricSpace,
    InvolutionAction,
    circle,
    disjoint_union,
    point_budget_scope,
    product_l2,
    quotient_by_involution,
)
from covlab.errors import CovlabError, InvariantViolation, ResolutionError
from covlab.gallery import profiles as P
from covlab.gallery.profiles import FiberWeight, WarpingProfile
from covlab.gallery.sampling import sample_surface_of_revolution

FAMILIES = (
    "circle", "sphere2", "rp2", "revolution", "two_spheres_reduced",
    "product_reduced", "hole_reduced", "tunnels", "handles", "thin_tori",
)

DEFAULT_MESH = {
    "circle": 0.02, "sphere2": 0.07, "rp2": 0.07, "revolution": 0.07,
    "two_spheres_reduced": 0.07, "product_reduced": 0.045, "hole_reduced": 0.04,
    "tunnels": 0.085, "handles": 0.1, "thin_tori": 0.1,
}

FOUR_PI = 4.0 * math.pi


class _Zero:
    """The zero space: claimed limit of collapsing sequences."""

    def __repr__(self):
        return "ZERO"


ZERO = _Zero()


@dataclass
class ExampleParams:
    family: str
    j: int = 1
    mesh: Optional[float] = None
    cap_radius: float = math.pi / 10
    tunnel_height: Optional[float] = None
    tunnel_radius: Optional[float] = None
    handle_width: Optional[float] = None
    eta: Optional[float] = None
    seed: int = 0
    extra: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CovlabError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        if int(self.j) != self.j or self.j < 1:
            raise CovlabError(f"j must be a positive integer, got {self.j}")
        self.j = int(self.j)
        if self.mesh is None:
            self.mesh = DEFAULT_MESH[self.family]
        if not self.mesh > 0:
            raise CovlabError(f"mesh must be positive, got {self.mesh}")

    def get(self, key, default):
        return float(self.extra.get(key, default))


# simple families -------------------------------------------------------------

def _sphere(mesh: float, fibers=None) -> FiniteMetricSpace:
    # latitude r in [-pi/2, pi/2] so the antipodal map is r -> -r, theta -> theta + pi
    prof = WarpingProfile([P.sinusoid(-math.pi / 2, math.pi / 2, beta=math.pi / 2)],
                          fibers=list(fibers or []), name="sphere")
    return sample_surface_of_revolution(prof, mesh)


def antipodal_map(space: FiniteMetricSpace) -> np.ndarray:
    """Permutation (r, theta) -> (-r, theta + pi) of a latitude-ring sphere sample."""
    ring = space.meta["ring"]
    start = space.meta["ring_start"]
    sizes = space.meta["ring_sizes"]
    m = len(sizes)
    idx = np.arange(space.n)
    slot = idx - start[ring]
    mirror = m - 1 - ring
    if np.any(sizes[mirror] != sizes[ring]):
        raise CovlabError("ring layout is not symmetric under r -> -r")
    half = np.where(sizes[ring] > 1, sizes[ring] // 2, 0)
    return start[mirror] + (slot + half) % sizes[ring]


def _rp2(mesh: float, fibers=None) -> FiniteMetricSpace:
    sph = _sphere(mesh, fibers)
    sigma = antipodal_map(sph)
    q = quotient_by_involution(sph, InvolutionAction(sigma))
    q.meta.update(cover=sph, sigma=sigma, ring=sph.meta["ring"][q.meta["orbit_reps"]])
    return q


def _j_label(space: FiniteMetricSpace, fam: str, j: int) -> FiniteMetricSpace:
    space.meta.setdefault("family", fam)
    space.meta["family"] = fam
    space.meta["j"] = j
    return space


def _revolution(p: ExampleParams) -> FiniteMetricSpace:
    eps = p.get("eps", 0.1 / p.j)
    L = p.get("L", 1.0)
    s = sample_surface_of_revolution(P.dumbbell_profile(eps, L), p.mesh)
    s.meta.update(eps=eps, L=L)
    return s


def _hole(p: ExampleParams, limit: bool = False) -> FiniteMetricSpace:
    if limit:
        prof = WarpingProfile(P.disk_profile(0.5, 1.0).segments,
                              fibers=[FiberWeight(P.hole_limit_fiber(), 2, FOUR_PI)], name="annulus")
    else:
        prof = WarpingProfile(P.disk_profile(0.0, 1.0).segments,
                              fibers=[FiberWeight(P.hole_fiber(p.j), 2, FOUR_PI)], name="disk")
    return sample_surface_of_revolution(prof, p.mesh)


def _product(p: ExampleParams) -> FiniteMetricSpace:
    a = p.get("len_a", 1.0)
    b = p.get("len_b", 3.0)
    sub = p.mesh / math.sqrt(2.0)
    return product_l2(circle(a, sub), circle(b, sub))


def _thin_torus(p: ExampleParams) -> FiniteMetricSpace:
    big = circle(2 * math.pi, p.mesh)
    small = circle(2 * math.pi / p.j, min(p.mesh, 2 * math.pi / p.j / 3))
    return product_l2(big, small)


# tunnels ---------------------------------------------------------------------

def tunnel_parameters(p: ExampleParams) -> Dict[str, float]:
    """Desk parameters of the tunnels family: N_j, r_j and h_j."""
    c, j = p.cap_radius, p.j
    # one tunnel at each pole already satisfies the covering constraint
    n_j = 1 if 10.0 / j >= c else None
    if n_j is None:
        raise CovlabError(f"j={j} needs more than one tunnel per cap; desk generator supports one")
    r_j = p.tunnel_radius if p.tunnel_radius is not None else 0.1 / j**1.5
    perimeter = 2 * n_j * 2 * math.pi * math.sin(r_j)
    cap_h = min(1.0 / perimeter, 1.0 / j)
    h_j = p.tunnel_height if p.tunnel_height is not None else 0.5 * cap_h / j
    if not 0 < h_j < cap_h:
        raise CovlabError(f"tunnel height must lie in (0, {cap_h:.6g}), got {h_j}")
    if not 0 < r_j < c:
        raise CovlabError(f"tunnel radius must lie in (0, cap radius), got {r_j}")
    return {"N_j": n_j, "r_j": r_j, "h_j": h_j, "cap_radius": c, "h_bound": cap_h}


def _two_sheet_profile(hole: float, tube: float) -> Tuple[WarpingProfile, List[Tuple[float, float, str]]]:
    """Two spheres minus polar holes of radius ``hole`` joined by two tubes.

    The profile parameter runs around the torus once: sheet 1 from the north
    hole to the south hole, the south tube, sheet 2 back north, the north tube.
    A zero-length tube glues the sheets directly along the hole boundaries.
    """
    s = math.pi - 2 * hole
    segs = [P.sinusoid(0.0, s, beta=hole)]
    parts = [(0.0, s, "sheet1")]
    x = s
    if tube > 0:
        segs.append(P.const(x, x + tube, math.sin(hole)))
        parts.append((x, x + tube, "tube_s"))
        x += tube
    segs.append(P.sinusoid(x, x + s, beta=hole - x))
    parts.append((x, x + s, "sheet2"))
    x += s
    if tube > 0:
        segs.append(P.const(x, x + tube, math.sin(hole)))
        parts.append((x, x + tube, "tube_n"))
        x += tube
    return WarpingProfile(segs, name="two-sheet torus"), parts


def _part_labels(r: np.ndarray, parts) -> np.ndarray:
    lab = np.empty(len(r), dtype=object)
    for a, b, name in parts:
        if name.startswith("sheet"):
            lab[(r > a + 1e-12) & (r < b - 1e-12)] = name
    for a, b, name in parts:
        if name.startswith("tube"):
            lab[(r >= a - 1e-12) & (r <= b + 1e-12)] = name
            if abs(b - parts[-1][1]) < 1e-12:
                # the last tube closes the period at r = 0
                lab[np.abs(r) <= 1e-12] = name
    # direct gluing (no tube): the seam ring belongs to sheet 1
    lab[[x is None for x in lab]] = "sheet1"
    return lab


def _periodic_two_sheet(hole: float, tube: float, mesh: float) -> FiniteMetricSpace:
    prof, parts = _two_sheet_profile(hole, tube)

    def orient(r):
        lab = _part_labels(np.asarray(r), parts)
        return np.where(lab == "sheet2", -1.0, 1.0)

    sp = sample_surface_of_revolution(prof, mesh, periodic=True, orientation=orient)
    ring_r = sp.meta["ring_r"]
    sp.meta["labels"] = _part_labels(ring_r, parts)[sp.meta["ring"]]
    sp.meta["parts"] = parts
    sp.meta["ring_labels"] = _part_labels(ring_r, parts)
    return sp


def _track_points(sp: FiniteMetricSpace, parts) -> Dict[str, int]:
    ring_r = sp.meta["ring_r"]
    start = sp.meta["ring_start"]
    out = {}
    names = {name: (a, b) for a, b, name in parts}
    a, b = names["sheet1"]
    out["equator"] = int(start[np.argmin(np.abs(ring_r - 0.5 * (a + b)))])
    if "tube_s" in names:
        a, b = names["tube_s"]
        cap = 0.5 * (a + b)
    else:
        cap = names["sheet1"][1]
    out["cap"] = int(start[np.argmin(np.abs(ring_r - cap))])
    return out


def _tunnels(p: ExampleParams) -> FiniteMetricSpace:
    tp = tunnel_parameters(p)
    if p.mesh > tp["cap_radius"] / 3:
        raise ResolutionError("mesh too coarse for the cap radius", tp["cap_radius"] / 3)
    sp = _periodic_two_sheet(tp["r_j"], tp["h_j"], p.mesh)
    sp.meta.update(tp)
    sp.meta["tracks"] = _track_points(sp, sp.meta["parts"])
    return sp


def _tunnels_limit(p: ExampleParams) -> FiniteMetricSpace:
    c = p.cap_radius
    # the seam circle must be resolvable: its critical scale pi*sin(c) > 4 * step
    need = math.pi * math.sin(c) / 10.0
    if p.mesh >= need:
        raise ResolutionError("mesh too coarse to resolve the seam circle", need)
    sp = _periodic_two_sheet(c, 0.0, p.mesh)
    sp.meta.update(cap_radius=c)
    sp.meta["tracks"] = _track_points(sp, sp.meta["parts"])
    return sp


def tunnel_cycle_rank(space: FiniteMetricSpace) -> int:
    """Cycle rank of the sheet/tube incidence graph read off the sample.

    Sheets are vertices and tubes are edges; connected pieces are taken in
    the sampling graph, so the rank is the genus 2 N_j - 1 of the surface.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    rows, cols, _ = space.meta["local_graph"]
    lab = space.meta["labels"]
    is_sheet = np.array([str(x).startswith("sheet") for x in lab])

    def comps(mask):
        keep = mask[rows] & mask[cols]
        n = space.n
        m = coo_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(n, n))
        _, cl = connected_components(m, directed=False)
        return cl, np.unique(cl[mask])

    sheet_cl, sheet_ids = comps(is_sheet)
    tube_cl, tube_ids = comps(~is_sheet)
    n_vert = len(sheet_ids)
    n_edge = 0
    for t in tube_ids:
        members = np.flatnonzero((tube_cl == t) & ~is_sheet)
        touch = set()
        mem = np.zeros(space.n, dtype=bool)
        mem[members] = True
        e = (mem[rows] & is_sheet[cols]) | (mem[cols] & is_sheet[rows])
        for a, b in zip(rows[e], cols[e]):
            s = b if is_sheet[b] else a
            touch.add(int(sheet_cl[s]))
        n_edge += max(len(touch) - 1, 0)
    return n_edge - n_vert + 1


# dispatch --------------------------------------------------------------------

def build_example(params: ExampleParams) -> FiniteMetricSpace:
    """Sample M_j of a family; deterministic in the parameters."""
    with point_budget_scope(params.extra.get("point_budget")):
        return _build(params)


def _build(params: ExampleParams) -> FiniteMetricSpace:
    fam, j, mesh = params.family, params.j, params.mesh
    if fam == "circle":
        s = circle(params.get("length", 2 * math.pi), mesh)
    elif fam == "sphere2":
        s = _sphere(mesh)
    elif fam == "rp2":
        s = _rp2(mesh)
    elif fam == "revolution":
        s = _revolution(params)
    elif fam == "two_spheres_reduced":
        s = _rp2(mesh, [FiberWeight(P.two_spheres_fiber(j), 2, FOUR_PI)])
    elif fam == "product_reduced":
        s = _product(params)
    elif fam == "hole_reduced":
        s = _hole(params)
    elif fam == "tunnels":
        s = _tunnels(params)
    elif fam == "handles":
        from covlab.gallery.handles import build_handles
        s = build_handles(params)
    elif fam == "thin_tori":
        s = _thin_torus(params)
    else:  # pragma: no cover - guarded by ExampleParams
        raise CovlabError(fam)
    return _j_label(s, fam, j)


def limit_space(family: str, params: Optional[ExampleParams] = None,
                mesh: Optional[float] = None) -> FiniteMetricSpace:
    """Sampled claimed limit M_inf of a family."""
    p = params if params is not None else ExampleParams(family)
    if mesh is not None:
        p = replace(p, mesh=mesh)
    with point_budget_scope(p.extra.get("point_budget")):
        return _limit(family, p)


def _limit(family: str, p: ExampleParams) -> FiniteMetricSpace:
    if family == "thin_tori":
        raise CovlabError("thin tori collapse: the limit is the ZERO descriptor, not a space")
    if family in ("circle", "sphere2", "rp2"):
        return build_example(replace(p, family=family))
    if family == "revolution":
        s = sample_surface_of_revolution(P.dumbbell_limit_profile(p.get("L", 1.0)), p.mesh)
    elif family == "two_spheres_reduced":
        base = _rp2(p.mesh, [FiberWeight(P.two_spheres_limit_fiber(), 2, FOUR_PI)])
        lat = base.coords[:, 0]
        s = base.subspace(np.flatnonzero(np.abs(lat) >= math.pi / 4 - 1e-9))
    elif family == "product_reduced":
        # two isometric copies: the limit δ-cover model
        copy = _rp2(p.get("rp2_mesh", 0.12))
        s = disjoint_union([copy, copy])
    elif family == "hole_reduced":
        s = _hole(p, limit=True)
    elif family == "tunnels":
        s = _tunnels_limit(p)
    elif family == "handles":
        s = _sphere(p.mesh)
    else:
        raise CovlabError(f"unknown family {family!r}")
    return _j_label(s, family + "_limit", 0)


# sequences -------------------------------------------------------------------

@dataclass
class SpaceSequence:
    family: str
    members: List[Tuple[int, FiniteMetricSpace]]
    limit: Union[FiniteMetricSpace, _Zero, None]
    meta: Dict[int, Dict[str, float]] = field(default_factory=dict)

    @property
    def js(self) -> List[int]:
        return [j for j, _ in self.members]

    def __getitem__(self, j: int) -> FiniteMetricSpace:
        for jj, s in self.members:
            if jj == j:
                return s
        raise KeyError(j)

    def to_csv(self, path) -> None:
        import csv

        keys = sorted({k for m in self.meta.values() for k in m} - {"volume", "diameter", "mesh"})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "volume", "diameter", "mesh"] + keys)
            for j in self.js:
                m = self.meta[j]
                w.writerow([j, repr(m["volume"]), repr(m["diameter"]), repr(m["mesh"])]
                           + [repr(m.get(k, "")) for k in keys])


_FEATURES = ("r_j", "h_j", "width", "eps", "N_j")


def sequence(family: str, j_list: Sequence[int], params: Optional[ExampleParams] = None,
             V0: Optional[float] = None, D0: Optional[float] = None,
             with_limit: bool = True) -> SpaceSequence:
    """Build M_j for each j, record volume and diameter, attach the limit."""
    base = params if params is not None else ExampleParams(family)
    members, meta = [], {}
    for j in j_list:
        s = build_example(replace(base, family=family, j=int(j)))
        vol = float(s.volume())
        diam = float(s.diameter())
        if V0 is not None and vol > V0:
            raise InvariantViolation(f"member j={j} has volume {vol:.6g} > V0={V0:.6g}", "volume bound")
        if D0 is not None and diam > D0:
            raise InvariantViolation(f"member j={j} has diameter {diam:.6g} > D0={D0:.6g}", "diameter bound")
        members.append((int(j), s))
        meta[int(j)] = {"volume": vol, "diameter": diam, "mesh": float(s.mesh)}
        meta[int(j)].update({k: float(s.meta[k]) for k in _FEATURES if k in s.meta})
    if family == "thin_tori":
        lim = ZERO
    elif with_limit:
        lim = limit_space(family, base)
    else:
        lim = None
    return SpaceSequence(family, members, lim, meta)
