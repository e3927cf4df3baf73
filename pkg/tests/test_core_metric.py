import math

import numpy as np
import pytest

from covlab import io
from covlab.core_metric import (
    FiniteMetricSpace,
    Identification,
    InvolutionAction,
    MetricGraph,
    ball,
    check_metric_axioms,
    circle,
    figure_eight,
    glue,
    metric_from_graph,
    point_space,
    product_l2,
    quotient_by_involution,
    segment,
)
from covlab.errors import BudgetExceeded, CovlabError, DisconnectedError, MetricViolation


def test_single_edge_subdivision():
    s = metric_from_graph(MetricGraph(2, [(0, 1, 1.0)]), 0.25)
    assert s.n == 5
    assert s.dist[0, 1] == pytest.approx(1.0)
    assert s.mesh <= 0.25 + 1e-12


def test_cycle_antipodal_distance_matches_brute_path():
    c = circle(2 * math.pi, 0.1)
    # brute oracle: arc lengths along the subdivided cycle
    n = c.n
    step = 2 * math.pi / n
    k = np.arange(n)
    arc = np.minimum(k, n - k) * step
    assert np.allclose(np.sort(c.dist[0]), np.sort(arc), atol=1e-9)
    assert abs(c.dist.max() - math.pi) <= 0.1


def test_theta_graph_min_edge():
    g = MetricGraph(2, [(0, 1, 1.0), (0, 1, 1.0), (0, 1, 2.0)])
    s = metric_from_graph(g, 0.1)
    assert s.dist[0, 1] == pytest.approx(1.0)


def test_disconnected_graph_rejected():
    with pytest.raises(DisconnectedError):
        metric_from_graph(MetricGraph(4, [(0, 1, 1.0), (2, 3, 1.0)]), 0.5)


def test_nonpositive_subdivision_rejected():
    with pytest.raises(CovlabError):
        metric_from_graph(MetricGraph(2, [(0, 1, 1.0)]), 0.0)


def test_ball_is_open():
    c = circle(2 * math.pi, 0.05)
    assert ball(c, 0, 0.0) == set()
    assert len(ball(c, 3, math.pi + 0.01)) == c.n
    arc = ball(c, 0, math.pi / 2)
    assert all(c.dist[0, q] < math.pi / 2 for q in arc)
    # samples exactly on the boundary are excluded
    assert len(arc) == int(np.count_nonzero(c.dist[0] < math.pi / 2))


def test_glue_segments_end_to_end():
    a, b = segment(1.0, 0.1), segment(1.0, 0.1)
    end_a = int(np.argmax(a.dist[0]))
    g = glue(a, b, Identification([(end_a, 0)]))
    assert g.diameter() == pytest.approx(2.0)


def test_wedge_metric():
    a, b = circle(2.0, 0.1), segment(1.0, 0.1)
    g = glue(a, b, Identification([(0, 0)]))
    # a's points first, then b's minus the identified one
    x = 5
    y_in_b = b.n - 1
    y = a.n + y_in_b - 1
    assert g.dist[x, y] == pytest.approx(a.dist[x, 0] + b.dist[0, y_in_b])


def test_glue_symmetric_up_to_relabel():
    a, b = segment(1.0, 0.2), circle(3.0, 0.2)
    ident = Identification([(0, 0)])
    g1 = glue(a, b, ident)
    g2 = glue(b, a, ident.reversed())
    # relabel g2 so a's points come first
    na, nb = a.n, b.n
    perm = np.r_[0, nb + np.arange(na - 1), np.arange(1, nb)]
    d2 = g2.dist[np.ix_(perm, perm)]
    assert g1.dist.shape == d2.shape
    assert np.allclose(g1.dist, d2)


def test_glue_rejects_distance_changing_identification():
    a, b = segment(1.0, 0.1), segment(2.0, 0.1)
    ends_a = [0, int(np.argmax(a.dist[0]))]
    ends_b = [0, int(np.argmax(b.dist[0]))]
    with pytest.raises(MetricViolation):
        glue(a, b, Identification(list(zip(ends_a, ends_b)), tol=1e-6))


def test_product_with_point_is_copy():
    x = circle(3.0, 0.1)
    p = product_l2(x, point_space())
    assert np.allclose(p.dist, x.dist)


def test_product_unit_segments_diagonal():
    a = segment(1.0, 1.0)
    p = product_l2(a, a)
    assert p.diameter() == pytest.approx(math.sqrt(2))


def test_product_circles_diameter_and_mesh():
    a, b = circle(1.0, 0.05), circle(3.0, 0.05)
    p = product_l2(a, b)
    assert p.diameter() ** 2 == pytest.approx(a.diameter() ** 2 + b.diameter() ** 2, abs=1e-12)
    assert p.diameter() == pytest.approx(math.hypot(0.5, 1.5), abs=0.05)
    assert p.mesh == pytest.approx(math.hypot(a.mesh, b.mesh))
    assert np.isclose(p.volume(), a.volume() * b.volume())


def test_product_budget():
    with pytest.raises(BudgetExceeded) as exc:
        a = circle(1.0, 0.01)
        product_l2(a, a, point_budget=100)
    assert exc.value.required == circle(1.0, 0.01).n ** 2


def test_circle_antipodal_quotient():
    c = circle(2 * math.pi, 0.05)
    sigma = np.argmax(c.dist, axis=1)
    q = quotient_by_involution(c, InvolutionAction(sigma))
    assert check_metric_axioms(q, 1e-6).passed
    assert q.diameter() == pytest.approx(math.pi / 2, abs=0.05)


def test_quotient_swapping_copies_is_copy():
    x = circle(2.0, 0.1)
    n = x.n
    big = np.full((2 * n, 2 * n), 10.0)
    big[:n, :n] = x.dist
    big[n:, n:] = x.dist
    np.fill_diagonal(big, 0.0)
    two = FiniteMetricSpace(big, mesh=x.mesh)
    sigma = np.r_[np.arange(n, 2 * n), np.arange(n)]
    q = quotient_by_involution(two, InvolutionAction(sigma))
    assert np.allclose(q.dist, x.dist)


def test_quotient_never_increases_distance():
    c = circle(2 * math.pi, 0.05)
    sigma = np.argmax(c.dist, axis=1)
    q = quotient_by_involution(c, InvolutionAction(sigma))
    reps = q.meta["orbit_reps"]
    assert np.all(q.dist <= c.dist[np.ix_(reps, reps)] + 1e-12)


def test_involution_with_fixed_point_rejected():
    c = circle(2.0, 0.5)
    sigma = np.arange(c.n)
    with pytest.raises(CovlabError):
        quotient_by_involution(c, InvolutionAction(sigma))


def test_axioms_detect_triangle_violation():
    d = np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float)
    rep = check_metric_axioms(FiniteMetricSpace(d))
    assert not rep.passed
    assert rep.triangle_violation == pytest.approx(1.0)


def test_axioms_on_graph_outputs():
    for s in (circle(2.0, 0.1), figure_eight(2.0, 6.0, 0.1), segment(1.0, 0.1)):
        assert check_metric_axioms(s, 1e-9).passed


def test_round_trip_distance_block(tmp_path):
    s = figure_eight(2.0, 3.0, 0.2)
    s.weights = np.random.default_rng(0).random(s.n)
    io.write_space(s, tmp_path / "f8.space")
    t = io.read_space(tmp_path / "f8.space")
    low = np.tril_indices(s.n, -1)
    assert np.array_equal(s.dist[low], t.dist[low])
    assert np.abs(s.dist - t.dist).max() <= 1e-12
    assert np.array_equal(s.weights, t.weights)
    assert t.mesh == s.mesh


def test_round_trip_edge_block(tmp_path):
    from covlab.gallery.examples import ExampleParams, build_example

    s = build_example(ExampleParams("sphere2", mesh=0.3))
    io.write_space(s, tmp_path / "s.space", block="edges")
    t = io.read_space(tmp_path / "s.space")
    assert np.abs(s.dist - t.dist).max() <= 1e-12
    assert np.array_equal(s.coords, t.coords)


def test_read_space_reports_line(tmp_path):
    p = tmp_path / "bad.space"
    p.write_text("covlab-space 1\npoints two\n", encoding="utf-8")
    with pytest.raises(CovlabError, match=":2:"):
        io.read_space(p)


def test_axioms_accept_disjoint_union():
    from covlab.core_metric import disjoint_union

    u = disjoint_union([circle(2.0, 0.1), segment(1.0, 0.1)])
    rep = check_metric_axioms(u, 1e-9)
    assert rep.passed and rep.symmetry_residual == 0.0
    u.dist[0, -1] = 1.0
    assert not check_metric_axioms(u, 1e-9).passed
