import math

import numpy as np
import pytest

from tubeswarm import geometry as geo
from tubeswarm.errors import AmbiguousRegion, DegenerateTube
from tubeswarm.geometry import TubeRegion

from conftest import random_tube, sample_inside


class TestBuildTube:
    def test_rectangle_unit_vectors(self, rectangle):
        assert np.allclose(rectangle.t_c, [1, 0])
        assert np.allclose(rectangle.t_l, [1, 0])
        assert np.allclose(rectangle.t_r, [1, 0])
        assert np.allclose(rectangle.n_l, [0, -1])
        assert np.allclose(rectangle.n_r, [0, 1])

    def test_converging_tube_vectors(self, converging):
        # left leg direction (10, -1)/sqrt(101); axis dot inward normal < 0
        assert np.allclose(converging.t_l, np.array([10, -1]) / math.sqrt(101))
        assert math.isclose(float(converging.t_c @ converging.n_l),
                            -1 / math.sqrt(101))

    def test_all_derived_vectors_unit_and_orthogonal(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            t = random_tube(rng)
            for v in (t.t_c, t.t_l, t.t_r, t.n_c, t.n_l, t.n_r):
                assert math.isclose(float(np.linalg.norm(v)), 1.0,
                                    abs_tol=1e-12)
            assert abs(float(t.n_l @ t.t_l)) < 1e-12
            assert abs(float(t.n_r @ t.t_r)) < 1e-12
            assert abs(float(t.n_c @ t.t_c)) < 1e-12
            assert float(t.t_l @ t.t_c) > 0
            assert float(t.t_r @ t.t_c) > 0
            g = t.vertices.mean(axis=0)
            assert float(t.n_l @ (g - t.p_l1)) > 0
            assert float(t.n_r @ (g - t.p_r1)) > 0

    def test_zero_length_leg_rejected(self):
        with pytest.raises(DegenerateTube):
            geo.build_tube((0, 1), (0, 1), (0, -1), (10, -1))

    def test_nonparallel_bases_rejected(self):
        with pytest.raises(DegenerateTube):
            geo.build_tube((0, 1), (10, 2), (0, -1), (10, -2))

    def test_k_t_below_one_rejected(self):
        with pytest.raises(DegenerateTube):
            geo.build_tube((0, 1), (10, 1), (0, -1), (10, -1), k_t=0.5)

    def test_length_and_diameter(self, rectangle):
        assert math.isclose(rectangle.length, 10.0)
        assert math.isclose(rectangle.diameter, math.hypot(10, 2))


class TestDistances:
    def test_rectangle_center(self, rectangle):
        assert math.isclose(geo.dist_left(rectangle, (5, 0)), 1.0)
        assert math.isclose(geo.dist_right(rectangle, (5, 0)), 1.0)

    def test_boundary_point_zero(self, rectangle):
        assert math.isclose(geo.dist_left(rectangle, (5, 1)), 0.0,
                            abs_tol=1e-12)

    def test_converging_center(self, converging):
        # distance from (5, 0) to the line through (0,2) and (10,1)
        assert math.isclose(geo.dist_left(converging, (5, 0)),
                            15 / math.sqrt(101))

    def test_outside_point_signed(self, rectangle):
        assert geo.dist_left(rectangle, (5, 2)) < 0

    def test_vectorized_matches_scalar(self, converging):
        rng = np.random.default_rng(0)
        pts = sample_inside(converging, rng, 50)
        dl = geo.dist_left(converging, pts)
        for p, d in zip(pts, dl):
            assert math.isclose(geo.dist_left(converging, p), d)

    def test_along_coord(self, rectangle):
        assert math.isclose(geo.along_coord(rectangle, (3, 0.5)), 3.0)

    def test_leg_samples_have_zero_boundary_distance(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            t = random_tube(rng)
            w = rng.uniform(0, 1, size=20)[:, None]
            on_left = (1 - w) * t.p_l0 + w * t.p_l1
            on_right = (1 - w) * t.p_r0 + w * t.p_r1
            assert np.all(np.abs(geo.dist_left(t, on_left)) < 1e-12)
            assert np.all(np.abs(geo.dist_right(t, on_right)) < 1e-12)


class TestContains:
    def test_interior(self, rectangle):
        assert geo.contains(rectangle, (5, 0))

    def test_past_finishing_line(self, rectangle):
        assert not geo.contains(rectangle, (11, 0))

    def test_boundary_counts_as_inside(self, rectangle):
        assert geo.contains(rectangle, (5, 1))

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(11)
        base = geo.build_tube((0, 2), (10, 1), (0, -2), (10, -1))
        pts = sample_inside(base, rng, 100)
        outs = pts + np.array([0, 5.0])
        ang = rng.uniform(0, 2 * math.pi)
        c, s = math.cos(ang), math.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        shift = rng.uniform(-5, 5, size=2)
        moved = geo.build_tube(*(rot @ v + shift for v in
                                 (base.p_l0, base.p_l1, base.p_r0, base.p_r1)))
        for p in pts:
            assert geo.contains(moved, rot @ p + shift)
        for p in outs:
            assert not geo.contains(moved, rot @ p + shift)

    def test_interior_samples_nonnegative_distances(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            t = random_tube(rng)
            pts = sample_inside(t, rng, 2000)
            assert np.all(geo.dist_left(t, pts) >= 0)
            assert np.all(geo.dist_right(t, pts) >= 0)


class TestClassify:
    def test_rectangle_all_middle(self, rectangle):
        rng = np.random.default_rng(2)
        for p in sample_inside(rectangle, rng, 200):
            assert geo.classify(rectangle, p, r_a=0.5) is TubeRegion.MIDDLE

    def test_outside(self, rectangle):
        assert geo.classify(rectangle, (11, 0), 0.5) is TubeRegion.OUTSIDE

    def test_left_band(self, converging):
        p = converging.p_l1 - 5 * converging.t_l + 0.2 * converging.n_l
        assert math.isclose(geo.dist_left(converging, p), 0.2)
        assert geo.classify(converging, p, r_a=0.5) is TubeRegion.LEFT

    def test_narrow_tube_ambiguous(self):
        t = geo.build_tube((0, 0.4), (4, 0.15), (0, -0.4), (4, -0.15))
        with pytest.raises(AmbiguousRegion):
            geo.classify(t, (3.0, 0.0), r_a=0.5)

    def test_regions_mutually_exclusive(self):
        t = geo.build_tube((0, 4), (12, 3), (0, -4), (12, -3), k_t=1.2)
        rng = np.random.default_rng(9)
        assert geo.assumption3_check(t, 0.5)
        regions = {geo.classify(t, p, 0.5) for p in sample_inside(t, rng, 500)}
        assert TubeRegion.OUTSIDE not in regions


class TestFinishing:
    def test_on_line(self, rectangle):
        assert geo.finishing_reached(rectangle, (10, 0), 0.01)

    def test_within_threshold(self, rectangle):
        assert geo.finishing_reached(rectangle, (9.995, 0), 0.01)

    def test_far_away(self, rectangle):
        assert not geo.finishing_reached(rectangle, (5, 0), 0.01)

    def test_requires_positive_threshold(self, rectangle):
        with pytest.raises(ValueError):
            geo.finishing_reached(rectangle, (5, 0), 0.0)


class TestOneAgentFits:
    def test_wide_tube_passes(self):
        t = geo.build_tube((0, 11), (23, 10), (0, -11), (23, -10), k_t=1.2)
        assert geo.assumption3_check(t, 0.5)

    def test_short_tube_fails(self):
        t = geo.build_tube((0, 2), (0.9, 2), (0, -2), (0.9, -2))
        assert not geo.assumption3_check(t, 0.5)

    def test_narrow_tube_fails(self):
        # both legs tilt inward and the middle band vanishes
        t = geo.build_tube((0, 0.2), (4, 0.1), (0, -0.2), (4, -0.1))
        assert not geo.assumption3_check(t, 0.5)

    def test_monte_carlo_agrees_with_analytic(self):
        rng = np.random.default_rng(21)
        r_a = 0.5
        for _ in range(20):
            t = random_tube(rng, max_tilt_deg=25.0)
            if not t.length > 2 * r_a:
                continue
            band = t.k_t * r_a
            pts = sample_inside(t, rng, 4000)
            dl = geo.dist_left(t, pts)
            dr = geo.dist_right(t, pts)
            la, ra = geo.left_active(t), geo.right_active(t)
            in_l = la & (dl < band)
            in_r = ra & (dr < band)
            analytic = geo.assumption3_check(t, r_a)
            if analytic:
                # disjoint side areas: no sample may sit in both bands,
                # and a middle sample must exist
                assert not np.any(in_l & in_r)
                assert np.any(~in_l & ~in_r)
