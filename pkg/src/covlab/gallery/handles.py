"""Spheres with thin handles of length pi glued between pairs of holes."""

from __future__ import annotations

import math
from typing import List

import numpy as np
from scipy.spatial import cKDTree

from covlab.core_metric import FiniteMetricSpace, current_point_budget
from covlab.errors import BudgetExceeded, CovlabError, ResolutionError
from covlab.gallery.profiles import WarpingProfile, handle_profile, sinusoid
from covlab.gallery.sampling import LOCAL_FACTOR, LocalGraph, finalize, ring_edges, ring_layout, ring_points


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _angle(a, b):
    return np.arccos(np.clip(np.sum(a * b, axis=-1), -1.0, 1.0))


def handle_placements(j: int, separation: float = 1.0, rotation: float = 0.0) -> np.ndarray:
    """Centers p_1..p_2j: pair i straddles longitude 2 pi i / j on the equator.

    Returns a (2j, 3) array; p_{2i-1}, p_{2i} are rows 2i-2, 2i-1.
    """
    out = []
    for i in range(j):
        lon = rotation + 2.0 * math.pi * i / j
        for s in (-0.5, 0.5):
            t = lon + s * separation
            out.append([math.cos(t), math.sin(t), 0.0])
    return np.array(out)


def _frame(c):
    # tangent basis at c
    ref = np.array([0.0, 0.0, 1.0]) if abs(c[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = _unit(np.cross(ref, c))
    e2 = np.cross(c, e1)
    return e1, e2


def _boundary_ring(c, w, n):
    e1, e2 = _frame(c)
    th = 2.0 * math.pi * np.arange(n) / n
    return (math.cos(w) * c[None, :]
            + math.sin(w) * (np.cos(th)[:, None] * e1[None, :] + np.sin(th)[:, None] * e2[None, :]))


def _arc_clear(a, b, centers, w, samples=9):
    """True where the great-circle arc a->b stays outside every open hole."""
    ok = np.ones(len(a), dtype=bool)
    ts = np.linspace(0.0, 1.0, samples)
    for t in ts[1:-1]:
        p = _unit((1 - t) * a + t * b)
        d = _angle(p[:, None, :], centers[None, :, :])
        ok &= np.all(d >= w - 1e-9, axis=1)
    return ok


def build_handles(p) -> FiniteMetricSpace:
    """M_j: unit sphere minus 2j holes of radius ``width`` with j handles."""
    j, mesh = p.j, p.mesh
    w = p.handle_width if p.handle_width is not None else 0.05 / j
    eta = p.eta if p.eta is not None else w / 4.0
    sep = p.get("separation", 1.0)
    centers = handle_placements(j, sep, p.get("rotation", 0.0))
    pair_d = _angle(centers[0::2], centers[1::2])
    min_gap = min((_angle(centers[a], centers[b]) for a in range(2 * j) for b in range(a + 1, 2 * j)),
                  default=math.pi)
    if min_gap < 2 * w + 4 * mesh:
        raise ResolutionError("holes too close for the mesh", (min_gap - 2 * w) / 4)
    if 2 * math.pi * math.sin(w) < 0.5 * mesh:
        raise ResolutionError("handle width below mesh resolution", 4 * math.pi * math.sin(w))

    # sphere on latitude rings
    sph_prof = WarpingProfile([sinusoid(-math.pi / 2, math.pi / 2, beta=math.pi / 2)], name="sphere")
    lay = ring_layout(sph_prof, mesh)
    ring, theta, _ = ring_points(lay)
    lat = lay.r[ring]
    xyz = np.column_stack([np.cos(lat) * np.cos(theta), np.cos(lat) * np.sin(theta), np.sin(lat)])
    wts = lay.weights[ring] / lay.sizes[ring]
    dc = _angle(xyz[:, None, :], centers[None, :, :])
    near = dc.min(axis=1)
    keep = near > w + 0.3 * mesh

    tube_prof = handle_profile(w, eta)
    tlay = ring_layout(tube_prof, mesh)
    nb = int(tlay.sizes[0])
    if tlay.sizes[-1] != nb:
        raise CovlabError("handle end rings differ in size")

    pts = [xyz[keep]]
    weights = [wts[keep]]
    labels: List[str] = ["sphere"] * int(keep.sum())
    ring_index = []
    off = int(keep.sum())
    for h in range(2 * j):
        pts.append(_boundary_ring(centers[h], w, nb))
        weights.append(np.zeros(nb))
        labels += [f"hole{h}"] * nb
        ring_index.append(off)
        off += nb
    sphere_n = off
    X = np.vstack(pts)
    W = np.concatenate(weights)
    # removed sphere points outside the holes hand their area to the nearest survivor
    drop = ~keep & (near > w)
    tree = cKDTree(X)
    _, nn = tree.query(xyz[drop])
    np.add.at(W, nn, wts[drop])

    g = LocalGraph()
    cut = LOCAL_FACTOR * mesh
    pairs = tree.query_pairs(2.0 * math.sin(cut / 2.0), output_type="ndarray")
    a, b = X[pairs[:, 0]], X[pairs[:, 1]]
    ell = _angle(a, b)
    ok = (ell <= cut) & _arc_clear(a, b, centers, w)
    g.add(pairs[ok, 0], pairs[ok, 1], ell[ok])

    # tubes: interior rings are new points, end rings are the hole boundaries
    m = len(tlay.r)
    tr, tth, tstart = ring_points(tlay)
    n_interior = int(tlay.sizes[1:-1].sum())
    tube_w = tlay.weights[tr] / tlay.sizes[tr]
    for i in range(j):
        ha, hb = 2 * i, 2 * i + 1
        local = np.empty(len(tr), dtype=np.int64)
        slot = np.arange(len(tr)) - tstart[tr]
        first = tr == 0
        last = tr == m - 1
        mid = ~(first | last)
        local[first] = ring_index[ha] + slot[first]
        # reversed angle at the far end keeps the surface orientable
        local[last] = ring_index[hb] + (-slot[last]) % nb
        local[mid] = off + np.arange(n_interior)
        tg = ring_edges(tlay, tube_prof, mesh)
        for rr, cc, ll in zip(tg.rows, tg.cols, tg.lens):
            g.add(local[rr], local[cc], ll)
        np.add.at(W, local[first | last], tube_w[first | last])
        W = np.concatenate([W, tube_w[mid]])
        # interior tube points get nominal coordinates at the pair midpoint
        X = np.vstack([X, np.repeat(_unit(centers[ha] + centers[hb])[None, :], n_interior, axis=0)])
        labels += [f"tube{i}"] * n_interior
        off += n_interior
    n = off
    if n > current_point_budget():
        raise BudgetExceeded(f"handles sample needs {n} points", n)
    deltas = [(math.pi + float(d) - 2.0 * w) / 2.0 for d in pair_d]
    meta = {"centers": centers, "width": w, "eta": eta, "pair_distances": pair_d,
            "critical_deltas": deltas, "labels": np.array(labels), "sphere_points": sphere_n,
            "tube_profile": tube_prof, "handle_area": float(W[sphere_n:].sum())}
    return finalize(n, g, W, coords=X, meta=meta)
