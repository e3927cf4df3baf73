"""Cover comparison and covering-spectrum search."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from covlab.core_metric import FiniteMetricSpace
from covlab.covers.chain import min_resolvable_delta
from covlab.covers.lifting import DEFAULT_NODE_BUDGET, TruncatedCover, truncated_cover

UNKNOWN = "unknown"


@dataclass
class Probe:
    """Lift-count profile of the cover at one scale."""

    delta: float
    profile: Optional[np.ndarray]     # None if the budget was hit
    base_lifts: int
    n_nodes: int
    certified: bool

    @property
    def known(self) -> bool:
        return self.profile is not None


def _probe(space, delta, basepoint, R, node_budget) -> Probe:
    cov = truncated_cover(space, delta, basepoint, R, node_budget=node_budget)
    bp = np.atleast_1d(basepoint)
    lifts = int(cov.lift_profile()[bp].sum())
    if cov.budget_hit:
        return Probe(delta, None, lifts, cov.n_nodes, False)
    return Probe(delta, cov.lift_profile(), lifts, cov.n_nodes, cov.complete_within_r)


@dataclass
class DiffVerdict:
    verdict: object                   # True, False or "unknown"
    evidence: Tuple[int, int]         # basepoint lifts at delta1, delta2
    n_points_differing: int
    certified: bool

    def __bool__(self):
        return self.verdict is True


def _compare(a: Probe, b: Probe) -> DiffVerdict:
    ev = (a.base_lifts, b.base_lifts)
    if not (a.known and b.known):
        return DiffVerdict(UNKNOWN, ev, -1, False)
    ndiff = int(np.count_nonzero(a.profile != b.profile))
    differ = ndiff > 0
    # a difference is witnessed by the profiles; equality needs both complete
    cert = differ or (a.certified and b.certified)
    return DiffVerdict(differ, ev, ndiff, cert)


def covers_differ(
    space: FiniteMetricSpace,
    delta1: float,
    delta2: float,
    basepoint=0,
    R: float = 10.0,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> DiffVerdict:
    if not delta1 <= delta2:
        raise ValueError("covers_differ needs delta1 <= delta2")
    a = _probe(space, delta1, basepoint, R, node_budget)
    b = a if delta2 == delta1 else _probe(space, delta2, basepoint, R, node_budget)
    return _compare(a, b)


@dataclass
class Bracket:
    delta_low: float
    delta_high: float
    evidence_below: int
    evidence_above: int
    candidate_source: str
    certified: bool

    @property
    def mid(self) -> float:
        return 0.5 * (self.delta_low + self.delta_high)

    @property
    def width(self) -> float:
        return self.delta_high - self.delta_low

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.delta_low - tol <= x <= self.delta_high + tol


@dataclass
class CovSpecReport:
    brackets: List[Bracket]
    scan_range: Tuple[float, float]
    radius: float
    refine_tol: float
    uncertified: List[Tuple[float, float, str]] = field(default_factory=list)
    candidates: List[float] = field(default_factory=list)
    n_probes: int = 0
    monotone_violations: int = 0

    @property
    def values(self) -> List[float]:
        return [b.mid for b in self.brackets]

    @property
    def certified_values(self) -> List[float]:
        return [b.mid for b in self.brackets if b.certified]

    def within(self, lo: float, hi: float, certified_only: bool = True) -> List[Bracket]:
        return [
            b for b in self.brackets
            if (b.certified or not certified_only) and b.delta_high >= lo and b.delta_low <= hi
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delta_low", "delta_high", "evidence_below", "evidence_above",
                        "candidate_source", "certified"])
            for b in self.brackets:
                w.writerow([repr(b.delta_low), repr(b.delta_high), b.evidence_below,
                            b.evidence_above, b.candidate_source, int(b.certified)])

    def summary(self) -> str:
        lines = [f"scan [{self.scan_range[0]:.6g}, {self.scan_range[1]:.6g}] R={self.radius:g} "
                 f"tol={self.refine_tol:g} probes={self.n_probes}"]
        if not self.brackets:
            lines.append("no critical values found")
        for b in self.brackets:
            tag = "certified" if b.certified else "uncertified"
            lines.append(f"  [{b.delta_low:.6f}, {b.delta_high:.6f}] lifts {b.evidence_below} -> "
                         f"{b.evidence_above} ({b.candidate_source}, {tag})")
        for lo, hi, why in self.uncertified:
            lines.append(f"  uncertified region [{lo:.6g}, {hi:.6g}]: {why}")
        return "\n".join(lines)


def cycle_candidates(
    cover: TruncatedCover, n_sources: int = 8, seed: int = 0
) -> List[float]:
    """Half displacement lengths of deck elements seen in ``cover``.

    For a few base points, two lifts of the same point are joined in the
    cover by a path projecting to a loop not killed at this scale; half its
    length is the scale at which such a loop can fit inside a ball.
    """
    n = cover.n_base
    rng = np.random.default_rng(seed)
    reached = np.flatnonzero(np.bincount(cover.projection, minlength=n) > 1)
    if len(reached) == 0:
        return []
    pick = rng.choice(reached, size=min(n_sources, len(reached)), replace=False)
    out = []
    for q in pick:
        lifts = np.flatnonzero(cover.projection == q)
        src = lifts[np.argmin(cover.dist[lifts])]
        d = cover.distances_from(src)[0]
        for t in lifts:
            if t != src and np.isfinite(d[t]):
                out.append(0.5 * float(d[t]))
    return out


def _dedupe(values: Sequence[float], tol: float) -> List[float]:
    out: List[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("COVLAB_THREADS", "1")))
    except ValueError:
        return 1


def covering_spectrum(
    space: FiniteMetricSpace,
    delta_range: Optional[Tuple[float, float]] = None,
    R: float = 10.0,
    refine_tol: float = 0.02,
    basepoint=0,
    grid_points: int = 6,
    max_candidates: int = 3,
    node_budget: int = DEFAULT_NODE_BUDGET,
    threads: Optional[int] = None,
) -> CovSpecReport:
    """Locate the scales at which the truncated delta-cover changes.

    Profiles are evaluated on the coarse grid plus points straddling every
    cycle candidate; each adjacent pair with differing profiles is bisected
    until narrower than ``refine_tol``.  Profiles only shrink as delta grows,
    so two probes with equal profiles enclose no change visible within R.
    """
    diam = space.diameter()
    need = min_resolvable_delta(space)
    # the sampled diameter undershoots the true one by up to a chain step
    top = diam + 2.0 * space.step + refine_tol
    lo, hi = delta_range if delta_range is not None else (need, top)
    uncertified: List[Tuple[float, float, str]] = []
    if lo < need:
        uncertified.append((lo, need, "below resolvable scale"))
    if lo <= need:
        lo = need * (1 + 1e-9)
    hi = min(hi, top)
    if not hi > lo:
        return CovSpecReport([], (lo, hi), R, refine_tol, uncertified)

    cache: Dict[float, Probe] = {}

    def probe(d: float) -> Probe:
        if d not in cache:
            cache[d] = _probe(space, d, basepoint, R, node_budget)
        return cache[d]

    first = truncated_cover(space, lo, basepoint, R, node_budget=node_budget)
    cands = [c for c in _dedupe(cycle_candidates(first), refine_tol) if lo < c < hi][:max_candidates]
    del first
    pts = set(np.linspace(lo, hi, grid_points + 1).tolist())
    for c in cands:
        for x in (c - refine_tol / 2.5, c + refine_tol / 2.5):
            if lo < x < hi:
                pts.add(x)
    pts = sorted(pts)
    nt = threads if threads is not None else _threads()
    if nt > 1:
        with ThreadPoolExecutor(nt) as ex:
            for d, p in zip(pts, ex.map(lambda d: _probe(space, d, basepoint, R, node_budget), pts)):
                cache[d] = p
    else:
        for d in pts:
            probe(d)

    brackets: List[Bracket] = []

    def source(a: float, b: float) -> str:
        return "cycle" if any(a <= c <= b for c in cands) else "grid"

    def refine(a: float, b: float) -> None:
        pa, pb = probe(a), probe(b)
        v = _compare(pa, pb)
        if v.verdict == UNKNOWN:
            uncertified.append((a, b, "node budget exceeded"))
            return
        if not v.verdict:
            if not v.certified:
                uncertified.append((a, b, "truncated cover incomplete"))
            return
        if b - a <= refine_tol:
            brackets.append(Bracket(a, b, pa.base_lifts, pb.base_lifts, source(a, b),
                                    certified=pa.certified and pb.certified))
            return
        m = 0.5 * (a + b)
        refine(a, m)
        refine(m, b)

    for a, b in zip(pts[:-1], pts[1:]):
        refine(a, b)

    viol = 0
    known = sorted((d, p) for d, p in cache.items() if p.known)
    for (_, p), (_, q) in zip(known[:-1], known[1:]):
        viol += int(np.any(q.profile > p.profile))
    brackets.sort(key=lambda b: b.delta_low)
    return CovSpecReport(brackets, (lo, hi), R, refine_tol, uncertified, cands, len(cache), viol)
