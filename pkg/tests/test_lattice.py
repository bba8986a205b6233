"""Geometry tests: elementary regions, windows, region adjustment."""

import itertools
import math

import pytest

from qplab.errors import InputError
from qplab.lattice import (
    ElementaryRegion,
    RegionPair,
    SignPattern,
    adjust_region,
    default_inner_cap,
    diameter,
    enumerate_elementary_regions,
    enumerate_sign_patterns,
    find_window,
    point_set_of,
    point_to_set_distance,
    region_from_json,
    region_metrics,
    region_to_json,
    set_distance,
    sup_distance,
    verify_region_pair,
    verify_window,
)


def brute_force_shape_count(N, d):
    """Count distinct point sets by direct construction, independently of the
    library's SignPattern machinery: carve the cube by every conjunction of
    two or more strict per-coordinate sign conditions."""
    cube = set(itertools.product(range(-N, N + 1), repeat=d))
    shapes = {frozenset(cube)}
    for signs in itertools.product((-1, 0, 1), repeat=d):
        active = [i for i, s in enumerate(signs) if s != 0]
        if len(active) < 2:
            continue
        removed = {
            p for p in cube
            if all(signs[i] * p[i] > 0 for i in active)
        }
        shapes.add(frozenset(cube - removed))
    return len(shapes)


class TestElementaryRegions:
    @pytest.mark.parametrize("N,d,count", [(5, 1, 1), (2, 2, 5), (1, 3, 21)])
    def test_region_counts(self, N, d, count):
        regions = enumerate_elementary_regions(N, d)
        assert len(regions) == count
        assert len(regions) == brute_force_shape_count(N, d)
        # distinct as point sets
        assert len({r.point_set() for r in regions}) == count

    def test_cube_first(self):
        regions = enumerate_elementary_regions(2, 2)
        assert regions[0].carve is None
        assert len(regions[0].points()) == 25

    def test_size_zero_collapses(self):
        # every carve leaves the single center point untouched
        assert len(enumerate_elementary_regions(0, 2)) == 1

    def test_membership_matches_point_list(self):
        for region in enumerate_elementary_regions(2, 2):
            pts = region.point_set()
            for p in itertools.product(range(-3, 4), repeat=2):
                assert (p in region) == (p in pts)

    def test_translate(self):
        region = enumerate_elementary_regions(2, 2)[3]
        moved = region.translate((5, -1))
        assert moved.point_set() == {
            (p[0] + 5, p[1] - 1) for p in region.points()
        }

    def test_carve_needs_two_active(self):
        with pytest.raises(InputError):
            SignPattern(("<", ".", "."))
        with pytest.raises(InputError):
            SignPattern(("x", ">"))

    def test_negative_size_rejected(self):
        with pytest.raises(InputError):
            ElementaryRegion((0,), -1)

    def test_json_round_trip(self):
        for region in enumerate_elementary_regions(1, 3)[:6]:
            back = region_from_json(region_to_json(region))
            assert back.point_set() == region.point_set()

    def test_json_hash_guard(self):
        blob = ElementaryRegion((0, 0), 2).to_json_dict()
        blob["size"] = 3
        with pytest.raises(InputError):
            ElementaryRegion.from_json_dict(blob)


class TestMetrics:
    def test_sup_distance(self):
        assert sup_distance((0, 0), (3, -4)) == 4
        assert sup_distance((1,), (1,)) == 0

    def test_diameter(self):
        assert diameter([(0, 0), (2, 1), (-1, 3)]) == 3
        assert diameter([]) == 0
        assert diameter(ElementaryRegion((0,), 4)) == 8

    def test_set_distance(self):
        assert set_distance([(0,)], [(5,), (7,)]) == 5
        assert set_distance([], [(0,)]) == math.inf

    def test_point_to_set(self):
        assert point_to_set_distance((0, 0), [(2, 2), (1, 5)]) == 2

    def test_region_metrics_dict(self):
        m = region_metrics([(0,), (4,)], [(10,)])
        assert m == {"diameter": 4, "distance": 6}


class TestFindWindow:
    def test_center_of_cube_gets_centered_cube(self):
        domain = ElementaryRegion((0, 0), 10)
        w = find_window((0, 0), domain, 2)
        assert w is not None and w.carve is None and w.center == (0, 0)
        assert verify_window((0, 0), domain, w) == []

    def test_corner_window_postconditions(self):
        # anchor at the extreme corner of [-10,10]^2 at scale 2
        domain = ElementaryRegion((0, 0), 10)
        w = find_window((10, 10), domain, 2)
        assert w is not None
        assert verify_window((10, 10), domain, w) == []
        assert (10, 10) in w.point_set()
        assert w.point_set() <= domain.point_set()

    def test_every_anchor_of_strip_has_window_or_none_consistent(self):
        # a 1d segment: every interior anchor gets a window, verify agrees
        domain = [(i,) for i in range(0, 30)]
        for k in range(0, 30):
            w = find_window((k,), domain, 3)
            assert w is not None
            assert verify_window((k,), domain, w) == []

    def test_no_window_in_sparse_domain(self):
        domain = [(0,), (100,)]
        assert find_window((0,), domain, 1) is None

    def test_anchor_must_be_inside(self):
        with pytest.raises(InputError):
            find_window((50,), [(0,), (1,)], 1)

    def test_window_distance_condition(self):
        # remainder within M/2 of the anchor must be swallowed by the window
        domain = [(i,) for i in range(-10, 11)]
        w = find_window((9,), domain, 4)
        assert w is not None
        rest = point_set_of(domain) - w.point_set()
        assert point_to_set_distance((9,), rest) >= 2

    def test_translation_equivariance(self):
        domain = ElementaryRegion((0, 0), 6)
        w0 = find_window((4, 6), domain, 2)
        wt = find_window((14, 6), domain.translate((10, 0)), 2)
        assert w0 is not None and wt is not None
        assert wt.point_set() == {(p[0] + 10, p[1]) for p in w0.points()}


class TestAdjustRegion:
    def test_case1_interior(self):
        Q = ElementaryRegion((0,), 24)
        pair = adjust_region((0,), Q, 8, 1)
        assert pair.case == "case1"
        assert pair.outer.center == (0,) and pair.outer.size == 8
        # inner is the core cube of radius ceil(8^(1/10)) = 2
        assert pair.inner == frozenset((i,) for i in range(-2, 3))
        assert verify_region_pair((0,), Q, 8, 1, pair) == []

    def test_case1_inner_cap_default(self):
        assert default_inner_cap(16, 1) == pytest.approx(4 * 16 ** 0.1)

    @pytest.mark.parametrize("n", range(14, 22))
    def test_boundary_collar_band(self, n):
        # anchors whose working cube pokes out of Q_24: desk cap required
        Q = ElementaryRegion((0,), 24)
        pair = adjust_region((n,), Q, 32, 4, inner_diam_cap=16.0)
        assert pair.case in ("case2", "case3")
        assert pair.outer.size == 16  # max(ceil(32/4), 16)
        assert verify_region_pair((n,), Q, 32, 4, pair) == []

    @pytest.mark.parametrize("n", range(-24, 25, 3))
    def test_full_sweep_q24(self, n):
        Q = ElementaryRegion((0,), 24)
        pair = adjust_region((n,), Q, 32, 4, inner_diam_cap=16.0)
        assert verify_region_pair((n,), Q, 32, 4, pair) == []

    def test_collar_exceeds_default_cap(self):
        # the asymptotic cap 4*16^0.1 = 5.28 cannot hold a grown collar
        Q = ElementaryRegion((0,), 24)
        with pytest.raises(InputError, match="diameter"):
            adjust_region((20,), Q, 32, 4)

    def test_anchor_outside_ambient(self):
        with pytest.raises(InputError, match="anchor"):
            adjust_region((30,), ElementaryRegion((0,), 24), 8, 1)

    def test_nbar_too_small_for_windows(self):
        # n_bar < 2*max(ceil(n_bar/4), 4*n1) is infeasible near the boundary
        with pytest.raises(InputError, match="infeasible"):
            adjust_region((23,), ElementaryRegion((0,), 24), 6, 4)

    def test_translation_equivariance(self):
        Q = ElementaryRegion((0,), 24)
        p0 = adjust_region((18,), Q, 32, 4, inner_diam_cap=16.0)
        p1 = adjust_region((25,), Q.translate((7,)), 32, 4, inner_diam_cap=16.0)
        shift = {(q[0] + 7,) for q in p0.inner}
        assert p1.inner == shift
        assert p1.outer.point_set() == {
            (q[0] + 7,) for q in p0.outer.points()
        }

    def test_2d_interior_and_edge(self):
        Q = ElementaryRegion((0, 0), 12)
        inner_pair = adjust_region((0, 0), Q, 6, 1)
        assert inner_pair.case == "case1"
        assert verify_region_pair((0, 0), Q, 6, 1, inner_pair) == []
        edge_pair = adjust_region((11, 0), Q, 16, 1, inner_diam_cap=12.0)
        assert edge_pair.case in ("case2", "case3")
        assert verify_region_pair((11, 0), Q, 16, 1, edge_pair) == []

    def test_pair_invariants_enforced(self):
        outer = ElementaryRegion((0,), 4)
        with pytest.raises(InputError):
            RegionPair(outer, frozenset({(9,)}), "case1", 4.0)
        with pytest.raises(InputError):
            RegionPair(outer, outer.point_set(), "case1", 2.0)

    def test_verify_flags_planted_violations(self):
        Q = ElementaryRegion((0,), 24)
        pair = adjust_region((0,), Q, 8, 1)
        # outer poking out of the working cube must be flagged
        bad = RegionPair(ElementaryRegion((4,), 8), pair.inner, "case1",
                         pair.inner_diam_cap)
        assert any("containment" in v
                   for v in verify_region_pair((0,), Q, 8, 1, bad))

    def test_frozenset_domain_accepted(self):
        Q = frozenset((i,) for i in range(-24, 25))
        pair = adjust_region((0,), Q, 8, 1)
        assert verify_region_pair((0,), Q, 8, 1, pair) == []
