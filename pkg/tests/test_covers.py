import math

import numpy as np
import pytest

from covlab.core_metric import FiniteMetricSpace, circle, figure_eight, segment
from covlab.covers.chain import chain_complex
from covlab.covers.lifting import (
    cover_components,
    lift_count,
    lift_growth,
    local_isometry_residuals,
    relator_closure_defects,
    truncated_cover,
)
from covlab.covers.spectrum import covering_spectrum, covers_differ, cycle_candidates
from covlab.errors import CovlabError, DisconnectedError, ResolutionError
from covlab import io


@pytest.fixture(scope="module")
def circ():
    return circle(2 * math.pi, 0.02)


def test_small_delta_relator_is_an_arc(circ):
    cx = chain_complex(circ, 1.0)
    vs, es = cx.relator(0)
    assert all(circ.dist[0, v] < 1.0 for v in vs)
    assert len(vs) == int(np.count_nonzero(circ.dist[0] < 1.0))
    assert all(cx.edge_in_ball(0, a, b, circ.dist[a, b]) for a, b in es)


def test_large_delta_relator_wraps_the_circle(circ):
    cx = chain_complex(circ, math.pi + 0.2)
    vs, _ = cx.relator(0)
    assert len(vs) == circ.n


def test_unresolvable_delta_rejected(circ):
    with pytest.raises(ResolutionError) as exc:
        chain_complex(circ, 0.1)
    assert exc.value.required == pytest.approx(4 * circ.step)


def test_disconnected_chain_graph_rejected():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    s = FiniteMetricSpace(d, mesh=0.01)
    with pytest.raises(DisconnectedError):
        chain_complex(s, 0.2)


def test_circle_line_cover_lift_count(circ):
    c = truncated_cover(circ, 1.0, R=10.0)
    assert c.complete_within_r
    assert lift_count(c, 0).count == 1 + 2 * math.floor(10 / (2 * math.pi))


def test_circle_lower_bound_flag(circ):
    c = truncated_cover(circ, 1.0, R=5 * 2 * math.pi)
    lc = lift_count(c, 0)
    assert lc.lower_bound and lc.count >= 5


def test_circle_closes_above_pi(circ):
    c = truncated_cover(circ, math.pi + 0.1, R=10.0)
    assert c.closed
    assert lift_count(c, 0).count == 1
    assert c.n_nodes == circ.n


@pytest.mark.parametrize("space", [segment(2.0, 0.02), figure_eight(2.0, 2.0, 0.01)])
def test_simply_connected_or_killed_covers_match_base(space):
    c = truncated_cover(space, 1.3, R=10.0)
    assert c.closed and c.n_nodes == space.n


def test_rp2_double_cover(example):
    s = example("rp2")
    c = truncated_cover(s, 1.0, R=math.pi)
    assert c.closed
    assert lift_count(c, 0).count == 2
    assert np.all(c.lift_profile() == 2)


def test_cover_is_one_component(circ):
    rep = cover_components(truncated_cover(circ, 1.0, R=8.0))
    assert rep.n_components == 1


def test_merge_order_confluence(circ):
    f8 = figure_eight(2.0, 6.0, 0.02)
    for space, delta in ((circ, 1.0), (f8, 1.5)):
        base = truncated_cover(space, delta, R=8.0).lift_profile()
        for seed in (1, 2, 3):
            alt = truncated_cover(space, delta, R=8.0, order_seed=seed).lift_profile()
            assert np.array_equal(base, alt)


def test_local_isometry_and_relator_closure():
    f8 = figure_eight(2.0, 6.0, 0.02)
    c = truncated_cover(f8, 1.5, R=6.0)
    res = local_isometry_residuals(c, f8, n_pairs=100)
    assert len(res) == 100 and res.max() <= 2 * c.step
    assert relator_closure_defects(c, f8) == 0


def test_covers_differ_straddling_and_not(circ, example):
    assert covers_differ(example("rp2"), 1.0, 2.0, R=4.0).verdict is True
    v = covers_differ(circ, 0.5, 1.0)
    assert v.verdict is False and v.certified
    assert covers_differ(circ, 2.0 - 1e-12, 2.0).verdict is False


def test_covers_differ_unknown_on_budget(circ):
    v = covers_differ(circ, 0.5, 1.0, R=50.0, node_budget=500)
    assert v.verdict == "unknown"


def test_cycle_candidates_near_half_loops():
    f8 = figure_eight(2.0, 6.0, 0.02)
    c = truncated_cover(f8, 0.5, R=8.0)
    cands = cycle_candidates(c)
    assert any(abs(x - 1.0) < 0.05 for x in cands)
    assert any(abs(x - 3.0) < 0.05 for x in cands)


def test_segment_spectrum_empty():
    s = segment(3.0, 0.02)
    rep = covering_spectrum(s, R=6.0, refine_tol=0.05)
    assert rep.values == []


def test_spectrum_csv_columns(circ, tmp_path):
    rep = covering_spectrum(circ, delta_range=(2.5, 3.6), R=8.0, refine_tol=0.05)
    rep.to_csv(tmp_path / "s.csv")
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head == "delta_low,delta_high,evidence_below,evidence_above,candidate_source,certified"
    assert all(0 < v <= circ.diameter() + 2 * circ.step + 0.05 for v in rep.values)


def test_disjoint_copies_give_product_structure(limit):
    lim = limit("product_reduced")
    c = truncated_cover(lim, 1.3, basepoint=[0, lim.n // 2], R=4.0)
    rep = cover_components(c)
    assert (rep.n_components, rep.lifts_per_component, rep.total) == (2, [2, 2], 4)
    assert rep.consistent


def test_lift_growth_classification(circ):
    g = lift_growth(circ, 1.0, np.arange(2.0, 40.0, 1.0))
    assert g.kind == "linear" and g.infinite_deck_group
    killed = lift_growth(circ, math.pi + 0.1, [2.0, 4.0, 8.0])
    assert killed.kind == "bounded"


def test_cover_export(circ, tmp_path):
    c = truncated_cover(circ, 1.0, R=7.0)
    io.write_cover(c, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[1] == "node_a,node_b,length"
    assert len(lines) == 4 + len(c.edges) + c.n_nodes


def test_truncation_radius_must_be_positive(circ):
    with pytest.raises(CovlabError):
        truncated_cover(circ, 1.0, R=0.0)
