import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covlab.convergence import (
    DISAPPEARS,
    INCONCLUSIVE,
    PERSISTS,
    FlatBoundInputs,
    PointMap,
    almost_isometry_eps,
    ball_mass,
    flat_bound,
    gh_lower_bound,
    handles_chain,
    handles_eps_prime,
    sequence_invariants,
    trend_verdict,
)
from covlab.core_metric import FiniteMetricSpace, circle, point_space
from covlab.errors import CovlabError
from covlab.gallery.examples import sequence


def _space(pts):
    pts = np.asarray(pts, dtype=float).reshape(len(pts), -1)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    return FiniteMetricSpace(d)


def _brute_gh(da, db):
    # every relation with full projections, the definition verbatim
    na, nb = len(da), len(db)
    cells = list(itertools.product(range(na), range(nb)))
    best = math.inf
    for mask in range(1, 1 << len(cells)):
        rel = [cells[k] for k in range(len(cells)) if mask >> k & 1]
        if {a for a, _ in rel} != set(range(na)) or {b for _, b in rel} != set(range(nb)):
            continue
        dis = max(abs(da[a, c] - db[b, e]) for a, b in rel for c, e in rel)
        best = min(best, dis)
    return 0.5 * best


# almost isometries -----------------------------------------------------------

def test_identity_map_is_exact():
    c = circle(2.0, 0.1)
    chk = almost_isometry_eps(PointMap(c, c, np.arange(c.n)))
    assert chk.eps == 0.0


def test_collapse_to_point():
    s = _space([[0.0], [1.0], [3.0]])
    chk = almost_isometry_eps(PointMap(s, point_space(), [0, 0, 0]))
    assert chk.distortion == pytest.approx(3.0)
    assert chk.covering_defect == 0.0


def test_covering_defect_of_partial_image():
    s = _space([[0.0], [1.0], [3.0]])
    sub = _space([[0.0], [1.0]])
    chk = almost_isometry_eps(PointMap(sub, s, [0, 1]))
    assert chk.distortion == 0.0 and chk.covering_defect == pytest.approx(2.0)


def test_point_map_validates_targets():
    s = _space([[0.0], [1.0]])
    with pytest.raises(CovlabError):
        PointMap(s, s, [0, 2])
    with pytest.raises(CovlabError):
        PointMap(s, s, [0])


# Gromov-Hausdorff ------------------------------------------------------------

def test_gh_two_point_spaces():
    a, b = _space([[0.0], [1.0]]), _space([[0.0], [3.0]])
    est = gh_lower_bound(a, b)
    assert est.exhaustive and est.label == "exact"
    assert est.value == pytest.approx(1.0)


def test_gh_against_brute_relations():
    rng = np.random.default_rng(7)
    for _ in range(12):
        a = _space(rng.random((int(rng.integers(1, 4)), 2)))
        b = _space(rng.random((int(rng.integers(1, 4)), 2)))
        est = gh_lower_bound(a, b)
        assert est.value == pytest.approx(_brute_gh(a.dist, b.dist), abs=1e-12)
        assert est.certified_lower <= est.value + 1e-12


def test_gh_symmetric_and_zero_on_relabel():
    rng = np.random.default_rng(3)
    a = _space(rng.random((5, 2)))
    b = _space(rng.random((4, 2)))
    assert gh_lower_bound(a, b).value == pytest.approx(gh_lower_bound(b, a).value)
    perm = rng.permutation(5)
    a2 = FiniteMetricSpace(a.dist[np.ix_(perm, perm)])
    assert gh_lower_bound(a, a2).value == pytest.approx(0.0, abs=1e-12)


def test_gh_heuristic_label_and_lower_bound():
    a, b = circle(2.0, 0.2), circle(3.0, 0.2)
    est = gh_lower_bound(a, b, budget=2000)
    assert not est.exhaustive and est.label == "heuristic"
    assert est.certified_lower == pytest.approx(0.5 * abs(a.diameter() - b.diameter()))
    assert est.value >= est.certified_lower - 1e-12


def test_gh_rejects_empty():
    with pytest.raises(CovlabError):
        gh_lower_bound(FiniteMetricSpace(np.zeros((0, 0))), point_space())


# flat-distance bound ---------------------------------------------------------

_pos = st.floats(0.0, 10.0, allow_nan=False)
_inputs = st.builds(FlatBoundInputs, st.floats(1e-6, 2.0), _pos, _pos, _pos, _pos, _pos,
                    _pos, _pos, _pos, _pos)


@settings(max_examples=60, deadline=None)
@given(_inputs)
def test_flat_bound_swap_symmetric(x):
    assert flat_bound(x).bound == pytest.approx(flat_bound(x.swapped()).bound, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(_inputs, st.floats(0.0, 1.0))
def test_flat_bound_monotone_in_lambda_and_eps(x, extra):
    b = flat_bound(x).bound
    more_lam = FlatBoundInputs(**{**x.__dict__, "lam": x.lam + extra})
    more_eps = FlatBoundInputs(**{**x.__dict__, "eps": x.eps + extra})
    assert flat_bound(more_lam).bound >= b - 1e-9
    assert flat_bound(more_eps).bound >= b - 1e-9


def test_flat_bound_trivial_regions_leave_rests():
    x = FlatBoundInputs(0.1, 1.0, 1.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.3, 0.4)
    assert flat_bound(x).bound == pytest.approx(0.7)


def test_flat_bound_hand_computed():
    x = FlatBoundInputs(eps=0.5, diam_u1=2.0, diam_u2=1.0, lam=0.0, vol_u1=1.0, vol_u2=1.0,
                        bdry_u1=0.0, bdry_u2=0.0, vol_rest1=0.0, vol_rest2=0.0, margin=1.01)
    r = flat_bound(x)
    a = 1.01 * math.acos(1 / 1.5) / math.pi * 2.0
    hb = math.sqrt(0.25 + 1.0) * 2.0
    assert r.h == 0.0 and r.h_bar == pytest.approx(hb)
    assert r.bound == pytest.approx((2 * hb + a) * 2.0)


def test_flat_bound_rejects_bad_inputs():
    with pytest.raises(CovlabError):
        flat_bound(FlatBoundInputs(0.1, 1, 1, -0.1, 1, 1, 0, 0, 0, 0))
    with pytest.raises(CovlabError):
        flat_bound(FlatBoundInputs(0.1, 1, 1, 0.1, 1, 1, 0, 0, 0, 0, margin=1.0))


def test_handles_eps_prime_values():
    assert handles_eps_prime(1) == pytest.approx(0.05 / 10)
    assert handles_eps_prime(2) == pytest.approx(0.1 / 4 / 100)


def test_handles_chain_below_composed_and_decreasing():
    chains = [handles_chain(j) for j in range(1, 6)]
    bounds = [flat_bound(c.inputs).bound for c in chains]
    assert all(b <= c.composed for b, c in zip(bounds, chains))
    assert all(x > y for x, y in zip(bounds, bounds[1:]))
    c1 = chains[0]
    assert c1.a_chain == pytest.approx(2 * math.acos(0.5))
    assert c1.h_bar_chain >= 4 * math.pi


# volume trends ---------------------------------------------------------------

def test_trend_verdicts():
    assert trend_verdict([1.0, 0.3, 0.05, 0.01])[0] == DISAPPEARS
    assert trend_verdict([1.0, 0.9, 1.1, 0.95])[0] == PERSISTS
    assert trend_verdict([1.0, 0.2, 0.9, 0.05])[0] == INCONCLUSIVE
    assert trend_verdict([1.0])[0] == INCONCLUSIVE


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=6), st.floats(1e-3, 1e3))
def test_trend_rescale_invariant(series, c):
    v1, r1 = trend_verdict(series)
    v2, r2 = trend_verdict([c * x for x in series])
    assert v1 == v2 and r1 == pytest.approx(r2, abs=1e-6)


def test_ball_mass_signed_cancellation():
    s = _space([[0.0], [0.1], [0.2]])
    s.orientation = np.array([1.0, -1.0, 1.0])
    assert ball_mass(s, 0, 0.15) == pytest.approx(0.0)
    assert ball_mass(s, 0, 1.0) == pytest.approx(s.weights.sum() / 3)


def test_sequence_invariant_table():
    seq = sequence("thin_tori", [2, 3], with_limit=False)
    rep = sequence_invariants(seq, V0=4 * math.pi**2, D0=4.0)
    assert rep.passed
    assert rep.table().splitlines()[0].startswith("j,volume,diameter")
    assert not sequence_invariants(seq, V0=1.0, D0=4.0).passed
