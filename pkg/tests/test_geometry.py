import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sectorlab.geometry import (
    ArcSet,
    DistanceField,
    NotRegularError,
    PolylineSet,
    check_mantle,
    check_regularity,
    christ_decompose,
    circle,
    collar_extension,
    distance_to_set,
    dump_polyline,
    koch_curve,
    load_polyline,
    regular_mantle,
    segment_set,
    square_boundary,
    verify_christ_properties,
)


def sampled_clip_length(E, center, r, n=200_000):
    """Midpoint-rule length of E inside the open disc, independent of the quadratic solve."""
    total = 0.0
    for (p, q), ell in zip(E.segments, E.lengths):
        if ell == 0:
            continue
        k = max(10, int(n * ell / E.length))
        tau = (np.arange(k) + 0.5) / k
        pts = p + tau[:, None] * (q - p)
        total += ell * np.mean(np.linalg.norm(pts - center, axis=1) < r)
    return total


@pytest.mark.parametrize(
    "center, r, expected",
    [((0.5, 0.0), 0.25, 0.5), ((0.0, 0.0), 0.25, 0.25), ((0.5, 0.3), 0.5, 0.8), ((0.5, 2.0), 0.5, 0.0)],
)
def test_clipped_length_segment(center, r, expected):
    assert segment_set().clipped_length(center, r) == pytest.approx(expected, abs=1e-15)


def test_clipped_length_circle_arc():
    # chord length 1 on the unit circle subtends a central angle of 2*asin(1/2) on each side
    c = circle()
    exact = 2 * 2 * math.asin(0.5)
    assert exact == pytest.approx(2 * math.pi / 3, rel=1e-15)
    assert c.clipped_length((1.0, 0.0), 1.0) == pytest.approx(exact, rel=1e-5)
    assert sampled_clip_length(c, np.array([1.0, 0.0]), 1.0) == pytest.approx(exact, rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    cx=st.floats(-1, 2),
    cy=st.floats(-1, 2),
    r=st.floats(0.05, 1.0),
)
def test_clipped_length_matches_sampling(seed, cx, cy, r):
    rng = np.random.default_rng(seed)
    E = PolylineSet.from_vertices(rng.uniform(0, 1, size=(6, 2)))
    center = np.array([cx, cy])
    assert E.clipped_length(center, r) == pytest.approx(sampled_clip_length(E, center, r), abs=5e-4)


def test_check_regularity_segment_constants():
    rep = check_regularity(segment_set(), 1, [0.01, 0.1, 0.25], [[0.0, 0.0], [0.5, 0.0]])
    assert rep.c_lower == pytest.approx(1.0)
    assert rep.c_upper == pytest.approx(2.0)
    assert rep.passes
    assert '"N": 1' in rep.to_json()


def test_check_regularity_rejects_bad_input():
    with pytest.raises(ValueError):
        check_regularity(segment_set(), 1, [], [[0, 0]])
    with pytest.raises(ValueError):
        check_regularity(segment_set(), 1, [0.5], [])
    with pytest.raises(ValueError):
        check_regularity(segment_set(), 1, [2.0], [[0, 0]])


def test_christ_segment_generation_one():
    tree = christ_decompose(segment_set(), 0.5, 1)
    g = tree.generations[1]
    np.testing.assert_array_equal(np.stack([g.starts, g.ends], 1), [[0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(g.centers, [[0.25, 0], [0.75, 0]])
    np.testing.assert_array_equal(g.parents, [0, 0])


def test_christ_segment_constants():
    tree = christ_decompose(segment_set(), 0.5, 8)
    rep = verify_christ_properties(tree)
    assert tree.a0 == 0.5
    assert tree.c1 == 1.0
    assert rep.passes, rep.failures
    assert rep.uncovered_measure == 0.0
    # cell length delta^k L against c (a0 delta^k): c = L / a0
    assert rep.c_admissible == pytest.approx(tree.curve.length / tree.a0)


def test_christ_rejects_non_integer_branching_and_irregular_sets():
    with pytest.raises(ValueError):
        christ_decompose(segment_set(), 0.4, 2)
    E = PolylineSet(np.array([[[0, 0], [1, 0]], [[3, 3], [3, 3]]], dtype=float))
    with pytest.raises(NotRegularError) as err:
        christ_decompose(E, 0.5, 2)
    assert err.value.witness is not None


def brute_diameter(curve, s0, s1, n=400):
    pts = curve.point_at(np.linspace(s0, s1, n))
    diff = pts[:, None] - pts[None]
    return np.sqrt((diff**2).sum(-1)).max()


def test_koch_level3_diameters_up_to_generation_8():
    curve = koch_curve(3)
    tree = christ_decompose(curve, 1 / 3, 8)
    rep = verify_christ_properties(tree)
    assert rep.passes, rep.failures
    for g in tree.generations:
        assert np.all(g.diameters <= tree.c1 * tree.delta**g.k * (1 + 1e-12))
    rng = np.random.default_rng(1)
    for k in (2, 3, 5):
        g = tree.generations[k]
        for j in rng.choice(len(g), size=5, replace=False):
            bf = brute_diameter(curve, g.starts[j], g.ends[j])
            # sampling only sees part of the cell; the exact vertex diameter is never smaller
            assert bf <= g.diameters[j] + 1e-12
            assert bf == pytest.approx(g.diameters[j], rel=1e-2)


@pytest.mark.parametrize("curve", [square_boundary(), circle(n=64)], ids=["square", "polygon64"])
def test_christ_convex_boundaries(curve):
    tree = christ_decompose(curve, 0.5, 7)
    rep = verify_christ_properties(tree)
    assert rep.passes, rep.failures
    assert rep.c1_measured <= tree.c1 * (1 + 1e-12)


def test_mantle_point_at_segment_end():
    tree = christ_decompose(segment_set(), 0.5, 6)
    m = regular_mantle(ArcSet([[0.0, 0.0]]), 0.1, tree)
    assert m.generation == 4
    np.testing.assert_array_equal(m.arcs.intervals, [[0.0, 1 / 16]])


def test_mantle_far_endpoint_is_absorbed():
    tree = christ_decompose(segment_set(), 0.5, 6)
    m = regular_mantle(ArcSet([[1.0, 1.0]]), 0.1, tree)
    np.testing.assert_array_equal(m.arcs.intervals, [[15 / 16, 1.0]])


def test_mantle_whole_curve_and_generation_zero():
    tree = christ_decompose(segment_set(), 0.5, 4)
    assert regular_mantle(ArcSet([[0, 1]]), 0.1, tree).arcs == ArcSet([[0, 1]])
    m0 = regular_mantle(ArcSet([[0.3, 0.3]]), 5.0, tree)
    assert m0.generation == 0
    assert m0.arcs == ArcSet([[0, 1]])


def test_mantle_shallow_tree_rejected():
    tree = christ_decompose(segment_set(), 0.5, 2)
    with pytest.raises(ValueError, match="generation 4"):
        regular_mantle(ArcSet([[0, 0]]), 0.1, tree)


@pytest.mark.parametrize("seed", range(4))
def test_mantle_postconditions_random(seed):
    rng = np.random.default_rng(seed)
    tree = christ_decompose(koch_curve(2), 0.5, 9)
    c_lambda = verify_christ_properties(tree).c_lambda
    L = tree.curve.length
    a = np.sort(rng.uniform(0, L, size=2))
    xi = ArcSet([[a[0], a[1]], [a[1] + 0.1 * L, a[1] + 0.1 * L]]) if a[1] + 0.1 * L < L else ArcSet([a])
    rho = float(rng.uniform(0.02, 0.3))
    m = regular_mantle(xi, rho, tree)
    rep = check_mantle(m, rho, tree, c_lambda, rng=rng)
    assert rep.contains_xi and rep.inside_lambda and rep.rho_bound
    assert rep.sampled_excess <= 1e-12
    assert rep.regular


def test_collar_square_bottom_edge():
    col = collar_extension(square_boundary(), segment_set((0, 0), (1, 0)), 0.1)
    # C runs from y = 0.2 up the right side, over the top, down to y = 0.2 on the left;
    # cells of length 1/16 meeting it extend it to y = 3/16 on both sides
    np.testing.assert_allclose(col.C.intervals, [[1.2, 3.8]])
    np.testing.assert_allclose(col.upsilon.intervals, [[1.1875, 3.8125]])
    assert col.dist_to_D == pytest.approx(0.1875)
    assert col.dist_to_D >= col.epsilon / 2
    rep = check_regularity(col.polyline, 1, [0.01, 0.1, 1.0], col.polyline.vertices)
    assert rep.c_lower > 0


def test_collar_trivial_cases():
    sq = square_boundary()
    full = collar_extension(sq, ArcSet(), 0.1)
    assert full.upsilon == ArcSet([[0, 4]])
    none = collar_extension(sq, ArcSet([[0, 4]]), 0.1)
    assert none.upsilon.is_empty
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        big = collar_extension(sq, segment_set((0, 0), (1, 0)), 1.0)
    assert big.upsilon.is_empty
    assert any("epsilon" in str(x.message) for x in w)


@pytest.mark.parametrize(
    "points, D, expected",
    [
        ([[0.3, 0.7]], segment_set((0, 0), (0, 1)), [0.3]),
        ([[3.0, 4.0]], PolylineSet.from_points([[0, 0]]), [5.0]),
        (
            [[2.0, 0.5]],
            PolylineSet(np.array([[[0, 0], [0, 1]], [[3, 0], [3, 1]]], dtype=float)),
            [1.0],
        ),
    ],
)
def test_distance_examples(points, D, expected):
    np.testing.assert_allclose(distance_to_set(points, D), expected, atol=1e-15)


def test_distance_empty_rejected():
    with pytest.raises(ValueError):
        distance_to_set([[0, 0]], PolylineSet(np.zeros((0, 2, 2))))
    with pytest.raises(ValueError):
        DistanceField(PolylineSet(np.zeros((0, 2, 2))))


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    x=st.lists(st.floats(-2, 2), min_size=4, max_size=4),
)
def test_distance_field_lipschitz_and_zero_on_set(seed, x):
    D = koch_curve(2)
    field = DistanceField(D)
    a, b = np.array(x[:2]), np.array(x[2:])
    da, db = field(np.stack([a, b]))
    assert da >= 0 and db >= 0
    assert abs(da - db) <= np.linalg.norm(a - b) + 1e-12
    on = D.point_at(np.random.default_rng(seed).uniform(0, D.length, 5))
    assert np.all(field(on) <= 1e-12)


def test_polyline_text_round_trip(tmp_path):
    text = """# two components
0 0
1 0
1 1

2 2
3 2
2 3
closed
"""
    E = load_polyline(text)
    assert len(E.segments) == 2 + 3
    again = load_polyline(dump_polyline(E))
    np.testing.assert_array_equal(again.segments, E.segments)
    path = tmp_path / "curve.txt"
    path.write_text(dump_polyline(square_boundary()))
    sq = load_polyline(path)
    assert sq.closed and sq.length == 4.0
    with pytest.raises(ValueError):
        load_polyline("1 2 3\n")


def test_arcset_operations():
    A = ArcSet([[0, 1], [0.5, 2], [3, 3]])
    np.testing.assert_array_equal(A.intervals, [[0, 2], [3, 3]])
    assert A.contains_set(ArcSet([[0.2, 0.4], [3, 3]]))
    assert not A.contains_set(ArcSet([[1.5, 2.5]]))
    assert A.meets_closed(2.0, 2.5) and not A.meets_closed(2.1, 2.9)
    np.testing.assert_array_equal(A.complement(4).intervals, [[2, 4]])
