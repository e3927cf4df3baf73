"""Piecewise warping profiles f(r) for metrics dr^2 + f(r)^2 dtheta^2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from covlab.errors import CovlabError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Segment:
    """One piece of a profile on [r0, r1].

    kind is ``const`` (value c), ``linear`` (c + alpha*r), ``sin``
    (sign * sin(alpha*r + beta), taken in absolute value when ``absolute``)
    or ``bridge`` (cubic Hermite between v0 and v1 with flat ends).
    """

    kind: str
    r0: float
    r1: float
    c: float = 0.0
    alpha: float = 1.0
    beta: float = 0.0
    sign: float = 1.0
    absolute: bool = False
    v0: float = 0.0
    v1: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "const":
            return np.full_like(r, self.c)
        if self.kind == "linear":
            return self.c + self.alpha * r
        if self.kind == "sin":
            v = self.sign * np.sin(self.alpha * r + self.beta)
            return np.abs(v) if self.absolute else v
        if self.kind == "bridge":
            t = np.clip((r - self.r0) / (self.r1 - self.r0), 0.0, 1.0)
            return self.v0 + (self.v1 - self.v0) * t * t * (3.0 - 2.0 * t)
        raise CovlabError(f"unknown segment kind {self.kind!r}")


def const(r0, r1, c) -> Segment:
    return Segment("const", r0, r1, c=c)


def linear(r0, r1, c=0.0, slope=1.0) -> Segment:
    return Segment("linear", r0, r1, c=c, alpha=slope)


def sinusoid(r0, r1, alpha=1.0, beta=0.0, sign=1.0, absolute=False) -> Segment:
    return Segment("sin", r0, r1, alpha=alpha, beta=beta, sign=sign, absolute=absolute)


def bridge(r0, r1, v0, v1) -> Segment:
    return Segment("bridge", r0, r1, v0=v0, v1=v1)


@dataclass
class FiberWeight:
    """Extra suppressed fiber of measure ``measure * g(r)**exponent``."""

    profile: "WarpingProfile"
    exponent: int
    measure: float


@dataclass
class WarpingProfile:
    segments: List[Segment]
    fiber_length: float = TWO_PI
    fibers: List[FiberWeight] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        segs = [s for s in self.segments if s.r1 > s.r0]
        if not segs:
            raise CovlabError("profile has no segments of positive length")
        for a, b in zip(segs[:-1], segs[1:]):
            if abs(a.r1 - b.r0) > 1e-12:
                raise CovlabError(f"segments do not partition the domain at r={a.r1}")
            jump = abs(float(a(a.r1)) - float(b(b.r0)))
            if jump > 1e-9:
                raise CovlabError(f"profile discontinuous at r={a.r1:.6g} (jump {jump:.3e})")
        self.segments = segs
        self._breaks = np.array([s.r1 for s in segs[:-1]])

    @property
    def domain(self) -> Tuple[float, float]:
        return self.segments[0].r0, self.segments[-1].r1

    @property
    def breakpoints(self) -> List[float]:
        return [s.r0 for s in self.segments] + [self.segments[-1].r1]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self._breaks, r, side="right")
        out = np.empty_like(r)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if np.any(m):
                out[m] = seg(r[m])
        return out

    def check_nonnegative(self, n: int = 2001) -> None:
        lo, hi = self.domain
        vals = self(np.linspace(lo, hi, n))
        if vals.min() < -1e-12:
            raise CovlabError(f"profile {self.name or ''} is negative (min {vals.min():.3e})")

    def density(self, r):
        """Volume density: fiber length * f * product of extra fibers."""
        r = np.asarray(r, dtype=float)
        out = self.fiber_length * np.abs(self(r))
        for fw in self.fibers:
            out = out * fw.measure * np.abs(fw.profile(r)) ** fw.exponent
        return out


def warped_volume(profile: WarpingProfile, rel_tol: float = 1e-9) -> float:
    """Volume of the warped product implied by ``profile`` and its fibers."""
    profile.check_nonnegative()
    pts = set(profile.breakpoints)
    for fw in profile.fibers:
        pts.update(fw.profile.breakpoints)
    lo, hi = profile.domain
    pts = sorted(p for p in pts if lo <= p <= hi)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        val, err = integrate.quad(lambda r: float(profile.density(r)), a, b,
                                  epsabs=0.0, epsrel=rel_tol, limit=200)
        total += val
    return total


# Profiles of the example families ------------------------------------------

def sphere_profile() -> WarpingProfile:
    return WarpingProfile([sinusoid(0.0, math.pi)], name="sphere")


def cylinder_profile(length: float, radius: float = 1.0) -> WarpingProfile:
    return WarpingProfile([const(0.0, length, radius)], name="cylinder")


def disk_profile(r0: float = 0.0, r1: float = 1.0) -> WarpingProfile:
    """Flat metric dr^2 + r^2 dtheta^2 (a disk if r0 = 0, else an annulus)."""
    return WarpingProfile([linear(r0, r1)], name="flat")


def dumbbell_profile(eps: float, L: float) -> WarpingProfile:
    """Two unit spheres joined by a tube of length L and width eps."""
    a = math.pi - eps
    b = L + math.pi - eps
    c = L + 2.0 * math.pi - 2.0 * eps
    return WarpingProfile(
        [sinusoid(0.0, a), const(a, b, math.sin(eps)),
         sinusoid(b, c, beta=-(L + math.pi - 2.0 * eps))],
        name=f"dumbbell(eps={eps:g})",
    )


def dumbbell_limit_profile(L: float) -> WarpingProfile:
    return WarpingProfile(
        [sinusoid(0.0, math.pi), const(math.pi, L + math.pi, 0.0),
         sinusoid(L + math.pi, L + 2.0 * math.pi, beta=-(math.pi + L))],
        name="dumbbell limit",
    )


def two_spheres_fiber(j: int) -> WarpingProfile:
    """f_j on (-pi/2, pi/2): 1/j near 0, |cos 2r| beyond pi/4 + 1/j."""
    q = math.pi / 4
    lo_in = max(q - 1.0 / j, 0.0)
    hi_in = min(q + 1.0 / j, math.pi / 2)
    inner = 1.0 / j
    outer = abs(math.cos(2.0 * (q + 1.0 / j))) if q + 1.0 / j < math.pi / 2 else 0.0
    half = []
    if lo_in > 0:
        half.append(("c", 0.0, lo_in))
    half.append(("b", lo_in, hi_in))
    if hi_in < math.pi / 2:
        half.append(("s", hi_in, math.pi / 2))
    segs: List[Segment] = []
    # mirror the half-profile onto r < 0
    for kind, a, b in reversed(half):
        segs.append(_fiber_piece(kind, -b, -a, inner, outer, mirrored=True))
    for kind, a, b in half:
        segs.append(_fiber_piece(kind, a, b, inner, outer, mirrored=False))
    segs = _merge_const(segs)
    return WarpingProfile(segs, name=f"f_{j}")


def _fiber_piece(kind, a, b, inner, outer, mirrored):
    if kind == "c":
        return const(a, b, inner)
    if kind == "s":
        return sinusoid(a, b, alpha=2.0, beta=math.pi / 2, absolute=True)
    return bridge(a, b, outer, inner) if mirrored else bridge(a, b, inner, outer)


def _merge_const(segs):
    out = []
    for s in segs:
        if out and s.kind == "const" and out[-1].kind == "const" and s.c == out[-1].c:
            out[-1] = const(out[-1].r0, s.r1, s.c)
        else:
            out.append(s)
    return out


def two_spheres_limit_fiber() -> WarpingProfile:
    q = math.pi / 4
    return WarpingProfile(
        [sinusoid(-math.pi / 2, -q, alpha=2.0, beta=math.pi / 2, absolute=True),
         const(-q, q, 0.0),
         sinusoid(q, math.pi / 2, alpha=2.0, beta=math.pi / 2, absolute=True)],
        name="f_inf",
    )


def hole_fiber(j: int) -> WarpingProfile:
    """h_j on [0, 1): 1/j inside, |cos((2r - 3/2) pi)| beyond 1/2 + 1/j."""
    a = max(0.5 - 1.0 / j, 0.0)
    b = min(0.5 + 1.0 / j, 1.0)
    outer = abs(math.cos((2.0 * b - 1.5) * math.pi))
    segs = []
    if a > 0:
        segs.append(const(0.0, a, 1.0 / j))
    segs.append(bridge(a, b, 1.0 / j, outer))
    if b < 1.0:
        segs.append(sinusoid(b, 1.0, alpha=2.0 * math.pi, beta=-math.pi, absolute=True))
    return WarpingProfile(segs, name=f"h_{j}")


def hole_limit_fiber() -> WarpingProfile:
    return WarpingProfile(
        [const(0.0, 0.5, 0.0),
         sinusoid(0.5, 1.0, alpha=2.0 * math.pi, beta=-math.pi, absolute=True)],
        name="h_inf",
    )


def handle_profile(width: float, eta: Optional[float] = None, length: float = math.pi) -> WarpingProfile:
    """Handle tube over [0, length] glued to holes of geodesic radius ``width``.

    Near the ends the tube continues the sphere, f = sin(width - r); the
    middle is a thinner cylinder of radius sin(2 eta).
    """
    if eta is None:
        eta = width / 4.0
    if not 0 < eta < width / 2.0:
        raise CovlabError(f"eta must lie in (0, width/2), got {eta}")
    mid = math.sin(2.0 * eta)
    e1 = math.sin(width - eta)
    return WarpingProfile(
        [sinusoid(0.0, eta, sign=-1.0, beta=-width),
         bridge(eta, 2 * eta, e1, mid),
         const(2 * eta, length - 2 * eta, mid),
         bridge(length - 2 * eta, length - eta, mid, e1),
         sinusoid(length - eta, length, beta=width - length)],
        name=f"handle(w={width:g})",
    )
