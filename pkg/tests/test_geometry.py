import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stlrrt.errors import DimensionMismatch, DimensionTooLarge, EmptyInterval, EmptySet, Unbounded
from stlrrt.geometry import (
    LinearPredicate, Polytope, chebyshev_center, contains, enumerate_vertices,
    hit_and_run, predicate_value, sample_uniform, segments_meet, space_time_vertices,
)

UNIT = LinearPredicate.box([-1, -1], [1, 1])


@pytest.mark.parametrize("x, val", [((0, 0), 1.0), ((1, 0), 0.0), ((2, 0), -1.0)])
def test_predicate_value_unit_box(x, val):
    assert predicate_value(UNIT, x) == val


def test_predicate_value_dimension_check():
    with pytest.raises(DimensionMismatch):
        predicate_value(UNIT, [0.0, 0.0, 0.0])


def test_box_predicate_rows():
    np.testing.assert_array_equal(UNIT.D, [[1, 0], [0, 1], [-1, 0], [0, -1]])
    np.testing.assert_array_equal(UNIT.c, [1, 1, 1, 1])


def test_vertices_square():
    V = enumerate_vertices(Polytope.box([-10, -10], [10, 10])).vertices
    assert len(V) == 4
    assert {tuple(v) for v in V} == {(-10, -10), (-10, 10), (10, -10), (10, 10)}


def test_vertices_six_dim_state_box():
    hi = np.array([120.0] * 3 + [0.5] * 3)
    V = enumerate_vertices(Polytope.box(-hi, hi)).vertices
    assert V.shape == (64, 6)
    np.testing.assert_array_equal(np.abs(V), np.broadcast_to(hi, V.shape))


def test_vertices_simplex():
    P = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    V = enumerate_vertices(P).vertices
    got = sorted(tuple(np.round(v, 12) + 0.0) for v in V)
    assert got == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]


def test_vertices_hexagon_general_path():
    ang = np.arange(6) * np.pi / 3
    A = np.c_[np.cos(ang), np.sin(ang)]
    P = Polytope(A, np.ones(6))
    V = enumerate_vertices(P).vertices
    assert len(V) == 6
    r = np.linalg.norm(V, axis=1)
    np.testing.assert_allclose(r, 1 / np.cos(np.pi / 6))


def test_vertices_dimension_guard():
    P = Polytope.box(-np.ones(9), np.ones(9))
    # boxes take the corner formula, a general 9-D polytope is refused
    Q = Polytope(np.vstack([P.A, np.ones((1, 9))]), np.r_[P.b, 5.0])
    with pytest.raises(DimensionTooLarge):
        enumerate_vertices(Q)


def test_unbounded_rejected():
    with pytest.raises(Unbounded):
        Polytope([[1, 0], [0, 1], [-1, 0]], [1, 1, 1])


def test_too_few_rows_rejected():
    with pytest.raises(Unbounded):
        Polytope([[1, 0], [0, 1]], [1, 1])


def test_space_time_vertices():
    V = enumerate_vertices(Polytope.box([-1, -1], [1, 1]))
    Z = space_time_vertices(V, 0.0, 5.0).vertices
    assert Z.shape == (8, 3)
    assert sorted(set(Z[:, 2])) == [0.0, 5.0]
    hi = np.array([120.0] * 3 + [0.5] * 3)
    V6 = enumerate_vertices(Polytope.box(-hi, hi))
    assert len(space_time_vertices(V6, 2.0, 3.0)) == 128
    with pytest.raises(EmptyInterval):
        space_time_vertices(V, 2.0, 2.0)


def test_contains_examples():
    P = Polytope.box([-1, -1], [1, 1])
    assert contains(P, [0, 0], 0.0)
    assert contains(P, [1, 0.3], 1e-9)
    assert not contains(P, [2, 0], 1e-9)
    with pytest.raises(DimensionMismatch):
        contains(P, [0, 0, 0])


def test_sample_uniform_in_box():
    rng = np.random.default_rng(7)
    x = sample_uniform(Polytope.box([-1, -1], [1, 1]), rng)
    assert np.max(np.abs(x)) <= 1.0


def test_sample_uniform_empty():
    P = Polytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [-1, -1, 1, 1], check=False)
    with pytest.raises(EmptySet):
        sample_uniform(P, np.random.default_rng(0))


def test_sample_uniform_mean():
    rng = np.random.default_rng(3)
    P = Polytope.box([-1, -1], [1, 1])
    xs = np.array([sample_uniform(P, rng) for _ in range(10_000)])
    assert np.all(np.abs(xs.mean(axis=0)) < 0.05)


def test_sample_thin_set_falls_back_to_hit_and_run():
    # a sliver far too thin for 10^4 box draws to hit reliably
    P = Polytope([[1, -1], [-1, 1], [1, 0], [-1, 0], [0, 1], [0, -1]],
                 [1e-7, 1e-7, 1, 1, 1, 1])
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = sample_uniform(P, rng, cap=100)
        assert contains(P, x, 0.0)


def test_hit_and_run_stays_inside():
    P = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert contains(P, hit_and_run(P, rng, steps=30), 0.0)


def test_chebyshev_center_square():
    c, r = chebyshev_center(Polytope.box([0, 0], [2, 4]))
    assert r == pytest.approx(1.0)
    assert c[0] == pytest.approx(1.0)


def test_bounding_box_of_simplex():
    P = Polytope([[-1, 0], [0, -1], [1, 2]], [0, 0, 2])
    lo, hi = P.bounding_box
    np.testing.assert_allclose(lo, [0, 0], atol=1e-9)
    np.testing.assert_allclose(hi, [2, 1], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_vertices_of_random_polygons(seed):
    rng = np.random.default_rng(seed)
    k = rng.integers(3, 8)
    ang = np.sort(rng.uniform(0, 2 * np.pi, k))
    A = np.c_[np.cos(ang), np.sin(ang)]
    b = rng.uniform(0.5, 2.0, k)
    A = np.vstack([A, np.eye(2), -np.eye(2)])
    b = np.r_[b, 3 * np.ones(4)]
    P = Polytope(A, b)
    V = enumerate_vertices(P).vertices
    assert all(contains(P, v, 1e-9) for v in V)
    # every facet that touches the polygon is supported by a vertex
    slack = b[None, :] - V @ A.T
    for i in range(A.shape[0]):
        if np.any(slack[:, i] < 1e-9):
            continue
        # facet i is redundant: removing it leaves the vertex set unchanged
        keep = np.arange(A.shape[0]) != i
        V2 = enumerate_vertices(Polytope(A[keep], b[keep], check=False)).vertices
        assert len(V2) == len(V)
    # convex combinations stay inside
    w = rng.dirichlet(np.ones(len(V)), size=20)
    for x in w @ V:
        assert contains(P, x, 1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), r=st.floats(-1.0, 1.0))
def test_predicate_superlevel_equivalence(seed, r):
    rng = np.random.default_rng(seed)
    D = rng.normal(size=(4, 3))
    c = rng.normal(size=4)
    h = LinearPredicate(D, c)
    A, b = h.superlevel_rows(r)
    for x in rng.normal(size=(20, 3)):
        assert (predicate_value(h, x) >= r) == bool(np.all(A @ x <= b))


def test_segments_meet_examples():
    box = Polytope.box([-1, -1], [1, 1])
    starts = [[-3, 0], [-3, 1.001], [2, 2], [-3, -3], [0, 0], [1, 1]]
    ends = [[3, 0], [3, 1.001], [2, 2], [-2, 3], [0, 0], [2, 3]]
    # crossing, parallel miss, point outside, oblique miss, point inside, touching a corner
    np.testing.assert_array_equal(segments_meet(box, starts, ends),
                                  [True, False, False, False, True, True])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_segments_meet_agrees_with_dense_points(seed):
    rng = np.random.default_rng(seed)
    box = Polytope.box([-1, -0.5], [0.5, 1])
    p, q = rng.uniform(-3, 3, size=(2, 2))
    s = np.linspace(0, 1, 20001)[:, None]
    pts = p + s * (q - p)
    dense = bool(np.any(np.all(pts @ box.A.T <= box.b + 1e-9, axis=1)))
    exact = bool(segments_meet(box, p, q)[0])
    # dense sampling can only miss hits, never invent them
    assert exact or not dense
    if exact:
        assert bool(np.any(np.all(pts @ box.A.T <= box.b + 1e-3, axis=1)))
