"""GH distortion estimates, the flat-distance upper bound, and sequence diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from covlab.core_metric import FiniteMetricSpace
from covlab.errors import CovlabError


# almost isometries -----------------------------------------------------------

@dataclass
class PointMap:
    source: FiniteMetricSpace
    target: FiniteMetricSpace
    f: np.ndarray

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.int64)
        if self.f.shape != (self.source.n,):
            raise CovlabError("point map must assign a target to every source point")
        if self.f.size and (self.f.min() < 0 or self.f.max() >= self.target.n):
            raise CovlabError("point map has targets outside the target space")


@dataclass
class AlmostIsometryCheck:
    distortion: float
    covering_defect: float

    @property
    def eps(self) -> float:
        return max(self.distortion, self.covering_defect)


def almost_isometry_eps(phi: PointMap) -> AlmostIsometryCheck:
    """Exact additive distortion and covering defect on the samples."""
    d1 = phi.source.dist
    d2 = phi.target.dist[np.ix_(phi.f, phi.f)]
    dis = float(np.abs(d2 - d1).max()) if phi.source.n else 0.0
    cover = float(phi.target.dist[:, np.unique(phi.f)].min(axis=1).max())
    return AlmostIsometryCheck(dis, cover)


# Gromov-Hausdorff estimates --------------------------------------------------

EXHAUSTIVE_MAX_SIDE = 6
EXHAUSTIVE_MAX_PRODUCT = 36


@dataclass
class GHEstimate:
    value: float                 # half the best correspondence distortion
    exhaustive: bool             # True: value is the exact minimum on the samples
    certified_lower: float       # always-valid lower bound on d_GH of the samples
    pairs: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return "exact" if self.exhaustive else "heuristic"


def correspondence_distortion(da: np.ndarray, db: np.ndarray, pairs) -> float:
    if not pairs:
        return math.inf
    ia = np.array([p[0] for p in pairs])
    ib = np.array([p[1] for p in pairs])
    return float(np.abs(da[np.ix_(ia, ia)] - db[np.ix_(ib, ib)]).max())


def _feasible(da, db, t):
    """Backtracking search for a correspondence of distortion <= t.

    Any correspondence contains the union of a map A->B and a map B->A, so it
    suffices to choose one partner per point of A, then per uncovered point of B.
    """
    na, nb = len(da), len(db)
    chosen: List[tuple] = []

    def ok(a, b):
        for (x, y) in chosen:
            if abs(da[a, x] - db[b, y]) > t:
                return False
        return abs(da[a, a] - db[b, b]) <= t

    def covered_b():
        return {y for _, y in chosen}

    def step_a(i):
        if i == na:
            return step_b(0)
        for b in range(nb):
            if ok(i, b):
                chosen.append((i, b))
                if step_a(i + 1):
                    return True
                chosen.pop()
        return False

    def step_b(k):
        if k == nb:
            return True
        if k in covered_b():
            return step_b(k + 1)
        for a in range(na):
            if ok(a, k):
                chosen.append((a, k))
                if step_b(k + 1):
                    return True
                chosen.pop()
        return False

    if step_a(0):
        return list(chosen)
    return None


def _exhaustive(da, db):
    vals = np.unique(np.abs(da[:, :, None, None] - db[None, None, :, :]).ravel())
    lo, hi = 0, len(vals) - 1
    best = _feasible(da, db, vals[hi])
    while lo < hi:
        mid = (lo + hi) // 2
        sol = _feasible(da, db, vals[mid])
        if sol is not None:
            hi, best = mid, sol
        else:
            lo = mid + 1
    return float(vals[lo]), best


def _heuristic(da, db, n_eval, rng):
    na, nb = len(da), len(db)
    # greedy by distance profile, then coordinate descent on both maps
    pa = np.sort(da, axis=1)
    pb = np.sort(db, axis=1)
    q = np.linspace(0, 1, 16)
    fa = np.quantile(pa, q, axis=1).T
    fb = np.quantile(pb, q, axis=1).T
    cost = np.abs(fa[:, None, :] - fb[None, :, :]).max(axis=2)
    f = cost.argmin(axis=1)
    g = cost.argmin(axis=0)

    def dis(f, g):
        ia = np.r_[np.arange(na), g]
        ib = np.r_[f, np.arange(nb)]
        return float(np.abs(da[np.ix_(ia, ia)] - db[np.ix_(ib, ib)]).max())

    best = dis(f, g)
    evals = 0
    improved = True
    while improved and evals < n_eval:
        improved = False
        for i in rng.permutation(na + nb):
            if evals >= n_eval:
                break
            if i < na:
                for b in range(nb):
                    old = f[i]
                    f[i] = b
                    v = dis(f, g)
                    evals += 1
                    if v < best - 1e-15:
                        best, improved = v, True
                    else:
                        f[i] = old
            else:
                k = i - na
                for a in range(na):
                    old = g[k]
                    g[k] = a
                    v = dis(f, g)
                    evals += 1
                    if v < best - 1e-15:
                        best, improved = v, True
                    else:
                        g[k] = old
    pairs = [(a, int(f[a])) for a in range(na)] + [(int(g[b]), b) for b in range(nb)]
    return best, pairs


def gh_lower_bound(a: FiniteMetricSpace, b: FiniteMetricSpace, budget: int = 20000,
                   seed: int = 0) -> GHEstimate:
    """Half the minimal correspondence distortion between two samples.

    Exact when both sides have at most six points; otherwise the result of a
    greedy start plus local search, labelled heuristic.  ``certified_lower``
    (half the diameter gap) is valid in every mode.
    """
    if a.n == 0 or b.n == 0:
        raise CovlabError("both spaces must be nonempty")
    da, db = a.dist, b.dist
    lower = 0.5 * abs(a.diameter() - b.diameter())
    if a.n <= EXHAUSTIVE_MAX_SIDE and b.n <= EXHAUSTIVE_MAX_SIDE and a.n * b.n <= EXHAUSTIVE_MAX_PRODUCT:
        t, pairs = _exhaustive(da, db)
        return GHEstimate(0.5 * t, True, max(lower, 0.5 * t), pairs)
    t, pairs = _heuristic(da, db, budget, np.random.default_rng(seed))
    return GHEstimate(0.5 * t, False, lower, pairs)


# flat-distance upper bound ---------------------------------------------------

@dataclass
class FlatBoundInputs:
    eps: float
    diam_u1: float
    diam_u2: float
    lam: float
    vol_u1: float
    vol_u2: float
    bdry_u1: float
    bdry_u2: float
    vol_rest1: float
    vol_rest2: float
    margin: float = 1.01

    def validate(self) -> None:
        for k, v in asdict(self).items():
            if not np.isfinite(v) or v < 0:
                raise CovlabError(f"flat-bound input {k} must be finite and nonnegative, got {v}")
        if not self.margin > 1:
            raise CovlabError(f"margin must exceed 1, got {self.margin}")

    def swapped(self) -> "FlatBoundInputs":
        return FlatBoundInputs(self.eps, self.diam_u2, self.diam_u1, self.lam, self.vol_u2,
                               self.vol_u1, self.bdry_u2, self.bdry_u1, self.vol_rest2,
                               self.vol_rest1, self.margin)


@dataclass
class FlatBoundReport:
    a: float
    h: float
    h_bar: float
    bound: float
    inputs: FlatBoundInputs


def flat_bound(x: FlatBoundInputs) -> FlatBoundReport:
    """Upper bound on the flat distance between two settled completions."""
    x.validate()
    dmax = max(x.diam_u1, x.diam_u2)
    a = x.margin * math.acos(1.0 / (1.0 + x.eps)) / math.pi * dmax
    h = math.sqrt(x.lam * (dmax + x.lam / 4.0))
    s = math.sqrt(x.eps * x.eps + 2.0 * x.eps)
    h_bar = max(h, s * x.diam_u1, s * x.diam_u2)
    vols = x.vol_u1 + x.vol_u2 + x.bdry_u1 + x.bdry_u2
    bound = (2.0 * h_bar + a) * vols + x.vol_rest1 + x.vol_rest2
    return FlatBoundReport(a, h, h_bar, bound, x)


def handles_eps_prime(j: int, eps_seq: Optional[Callable[[int], float]] = None) -> float:
    """eps'_j = min over i <= j of eps_{2i-1}/10^i and eps_{2i}/10^i."""
    e = eps_seq or (lambda i: 0.1 / i)
    return min(min(e(2 * i - 1), e(2 * i)) / 10.0**i for i in range(1, j + 1))


@dataclass
class HandlesChain:
    """Inputs and composed estimate of the flat bound for the handles pair."""

    j: int
    eps_prime: float
    inputs: FlatBoundInputs
    a_chain: float
    h_chain: float
    h_bar_chain: float
    composed: float


def handles_chain(j: int, eps_prime: Optional[float] = None, area_w: float = math.pi,
                  margin: float = 1.01) -> HandlesChain:
    """The handles-example estimate term by term.

    ``area_w`` is the bound used for Area(W) = Area(W-bar); the stated value
    is pi, the true area of the sphere minus small holes is close to 4 pi.
    """
    ep = handles_eps_prime(j) if eps_prime is None else eps_prime
    eps = 1.0 / j**2
    d_bar, d_w = math.pi, 2.0 * math.pi
    lam = 2.0 * (math.pi - 2.0) * j * ep
    a_p = 2.0 * math.acos(j / (j + 1.0))
    h_p = math.sqrt(4 * math.pi**2 * (math.pi - 2) * j * ep + (math.pi - 2) / 2.0 * j * ep)
    hb_p = max(4.0 * math.pi / j, h_p)
    hole = 2.0 * j * math.pi * ep**2
    handles = 2.0 * math.pi**2 * ep
    bdry = 2.0 * j * math.pi * ep
    composed = (2.0 * hb_p + a_p) * (2 * area_w + 2 * bdry) + hole + handles
    inputs = FlatBoundInputs(eps, d_bar, d_w, lam, area_w, area_w, bdry, bdry, hole, handles, margin)
    return HandlesChain(j, ep, inputs, a_p, h_p, hb_p, composed)


# disappearing points ---------------------------------------------------------

DISAPPEARS = "DISAPPEARS"
PERSISTS = "PERSISTS"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class VolumeTrend:
    js: List[int]
    series: np.ndarray
    verdict: str
    decay_rate: float      # fitted slope of log volume against log j


def ball_mass(space: FiniteMetricSpace, center: int, r: float) -> float:
    """|sum of oriented weights| over the closed ball B(center, r)."""
    inside = space.dist[center] <= r
    return float(abs(space.signed_weights()[inside].sum()))


def trend_verdict(series: Sequence[float], js: Optional[Sequence[int]] = None,
                  drop: float = 0.1, floor: float = 0.5, slack: float = 0.05):
    v = np.asarray(series, dtype=float)
    js = np.arange(1, len(v) + 1) if js is None else np.asarray(js, dtype=float)
    if len(v) < 2 or v[0] <= 0:
        return INCONCLUSIVE, 0.0
    rel = v / v[0]
    pos = rel > 0
    rate = float(np.polyfit(np.log(js[pos]), np.log(rel[pos]), 1)[0]) if pos.sum() >= 2 else -np.inf
    monotone = bool(np.all(np.diff(rel) <= slack))
    if monotone and rel[-1] < drop and rate < 0:
        return DISAPPEARS, rate
    if rel.min() >= floor and v.min() >= floor * v.max():
        return PERSISTS, rate
    return INCONCLUSIVE, rate


def ball_volume_trend(seq, track, r: float) -> VolumeTrend:
    """Weighted ball volumes along a sequence and a disappearance verdict.

    ``track`` maps j to a point id, or is a callable ``(j, space) -> id``, or
    a key of each member's ``meta['tracks']``.
    """
    js, vals = [], []
    for j, s in seq.members:
        if callable(track):
            c = int(track(j, s))
        elif isinstance(track, str):
            c = int(s.meta["tracks"][track])
        else:
            c = int(track[j])
        js.append(j)
        vals.append(ball_mass(s, c, r))
    verdict, rate = trend_verdict(vals, js)
    return VolumeTrend(js, np.array(vals), verdict, rate)


# sequence invariants ---------------------------------------------------------

@dataclass
class InvariantRow:
    j: int
    volume: float
    diameter: float
    volume_ok: bool
    diameter_ok: bool
    spectrum: Optional[List[float]] = None


@dataclass
class InvariantReport:
    family: str
    rows: List[InvariantRow]
    limit: str

    @property
    def passed(self) -> bool:
        return all(r.volume_ok and r.diameter_ok for r in self.rows)

    def table(self) -> str:
        lines = ["j,volume,diameter,volume_ok,diameter_ok,spectrum"]
        for r in self.rows:
            spec = "" if r.spectrum is None else ";".join(f"{x:.6g}" for x in r.spectrum)
            lines.append(f"{r.j},{r.volume!r},{r.diameter!r},{int(r.volume_ok)},{int(r.diameter_ok)},{spec}")
        return "\n".join(lines)


def sequence_invariants(seq, V0: float, D0: float,
                        spectrum: Optional[Callable[[FiniteMetricSpace], List[float]]] = None
                        ) -> InvariantReport:
    rows = []
    for j, s in seq.members:
        m = seq.meta[j]
        spec = spectrum(s) if spectrum is not None else None
        rows.append(InvariantRow(j, m["volume"], m["diameter"], m["volume"] <= V0,
                                 m["diameter"] <= D0, spec))
    return InvariantReport(seq.family, rows, repr(seq.limit) if seq.limit is not None else "none")


def handles_sampled_inputs(j: int, mesh: Optional[float] = None, margin: float = 1.01):
    """Flat-bound inputs for (S^2, M_j) measured on the handles sample.

    U1 is the sphere minus the holes and U2 its copy inside M_j.  lambda is the
    largest sampled gap between the distances of M_j and exact great-circle
    distances on that region, so it is a lower estimate of the sup.
    """
    from covlab.gallery.examples import ExampleParams, build_example
    from covlab.gallery.profiles import warped_volume

    s = build_example(ExampleParams("handles", j=j, mesh=mesh))
    w = s.meta["width"]
    idx = np.arange(s.meta["sphere_points"])
    x = s.coords[idx]
    d_sph = np.arccos(np.clip(x @ x.T, -1.0, 1.0))
    d_m = s.dist[np.ix_(idx, idx)]
    lam = float(np.abs(d_m - d_sph).max())
    tube = warped_volume(s.meta["tube_profile"])
    caps = 2 * j * 2 * math.pi * (1 - math.cos(w))
    vol_u = 4 * math.pi - caps
    bdry = 2 * j * 2 * math.pi * math.sin(w)
    inputs = FlatBoundInputs(1.0 / j**2, float(d_sph.max()), float(d_m.max()), lam, vol_u, vol_u,
                             bdry, bdry, caps, j * tube, margin)
    return inputs, s
