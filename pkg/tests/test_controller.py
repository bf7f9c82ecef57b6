import math

import numpy as np
import pytest

from tubeswarm import controller as ctl
from tubeswarm import geometry as geo
from tubeswarm import potentials as pot
from tubeswarm.controller import ControlParams, PanelKeeper, Snapshot
from tubeswarm.errors import CoincidentAgents, OutsideTube

from conftest import random_tube, sample_inside


@pytest.fixture
def wide_tube():
    """Converging tube wide enough for the large-scenario radii."""
    return geo.build_tube((0, 4), (12, 3), (0, -4), (12, -3), k_t=1.2)


class TestNeighbors:
    def test_beyond_interaction_radius(self):
        snap = Snapshot(positions=[[0, 0], [1.0, 0]])
        assert ctl.neighbors(snap, 0, r_a=0.5, r_s=0.25) == []

    def test_within_interaction_radius(self):
        snap = Snapshot(positions=[[0, 0], [0.7, 0]])
        assert ctl.neighbors(snap, 0, r_a=0.5, r_s=0.25) == [1]
        assert ctl.neighbors(snap, 1, r_a=0.5, r_s=0.25) == [0]

    def test_alone(self):
        snap = Snapshot(positions=[[0, 0]])
        assert ctl.neighbors(snap, 0, r_a=0.5, r_s=0.25) == []


class TestLineApproach:
    def test_middle_gives_axis_direction(self, wide_tube):
        u = ctl.u1_basic(wide_tube, (6, 0), v=2.0, r_a=0.5)
        assert np.allclose(u, 2.0 * wide_tube.t_c)

    def test_left_band_gives_leg_direction(self, wide_tube):
        p = wide_tube.p_l1 - 6 * wide_tube.t_l + 0.2 * wide_tube.n_l
        u = ctl.u1_basic(wide_tube, p, v=2.0, r_a=0.5)
        assert np.allclose(u, 2.0 * wide_tube.t_l)

    def test_norm_always_v(self, wide_tube):
        rng = np.random.default_rng(0)
        for p in sample_inside(wide_tube, rng, 100):
            u = ctl.u1_basic(wide_tube, p, v=2.0, r_a=0.5)
            assert math.isclose(float(np.linalg.norm(u)), 2.0)

    def test_outside_rejected(self, wide_tube):
        with pytest.raises(OutsideTube):
            ctl.u1_basic(wide_tube, (20, 0), v=2.0, r_a=0.5)


class TestBlendedLineApproach:
    def test_plateaus_match_switched_version(self, wide_tube):
        rng = np.random.default_rng(1)
        for p in sample_inside(wide_tube, rng, 200):
            dl = geo.dist_left(wide_tube, p)
            dr = geo.dist_right(wide_tube, p)
            band_lo, band_hi = 0.5, 1.2 * 0.5
            if min(dl, dr) <= band_lo or min(dl, dr) >= band_hi:
                u_m = ctl.u1_modified(wide_tube, p, 2.0, 0.5, k_t=1.2)
                u_b = ctl.u1_basic(wide_tube, p, 2.0, 0.5)
                # the switched rule uses the k_t band, so compare only
                # where both rules agree on the region
                if min(dl, dr) >= band_hi or min(dl, dr) <= band_lo:
                    assert np.allclose(u_m, u_b, atol=1e-12)

    def test_norm_always_v(self, wide_tube):
        rng = np.random.default_rng(2)
        pts = sample_inside(wide_tube, rng, 500)
        u = ctl.u1_modified_many(wide_tube, pts, 2.0, 0.5, k_t=1.2)
        assert np.allclose(np.linalg.norm(u, axis=1), 2.0)

    def test_mid_band_between_leg_and_axis(self, wide_tube):
        d = (0.5 + 0.6) / 2
        p = wide_tube.p_l1 - 6 * wide_tube.t_l + d * wide_tube.n_l
        u = ctl.u1_modified(wide_tube, p, 2.0, 0.5, k_t=1.2) / 2.0
        lo = min(float(wide_tube.t_l @ wide_tube.t_c), 1.0)
        assert lo < float(u @ wide_tube.t_c) < 1.0
        # it turns toward the leg, never past it
        assert float(u @ wide_tube.t_l) > float(wide_tube.t_l @ wide_tube.t_c)

    def test_continuity_across_band_edge(self, wide_tube):
        # march a ray crossing the blend band; steps in the output are
        # proportional to steps in the input
        start = wide_tube.p_l1 - 6 * wide_tube.t_l + 1.0 * wide_tube.n_l
        direction = wide_tube.n_l
        ss = np.linspace(0.0, 0.8, 400)
        pts = start - np.outer(ss, direction)
        u = ctl.u1_modified_many(wide_tube, pts, 2.0, 0.5, k_t=1.2)
        steps = np.linalg.norm(np.diff(u, axis=0), axis=1)
        assert np.max(steps) < 0.1


class TestPairwiseAvoidance:
    def test_zero_beyond_interaction_radius(self, large_params):
        snap = Snapshot(positions=[[0, 0], [0.8, 0]])
        assert np.allclose(ctl.u2_avoidance(snap, 0, large_params), 0)

    def test_newton_pair_symmetry(self, large_params):
        snap = Snapshot(positions=[[0, 0], [0.6, 0.1]])
        f0 = ctl.u2_avoidance(snap, 0, large_params)
        f1 = ctl.u2_avoidance(snap, 1, large_params)
        assert np.allclose(f0, -f1)
        assert float(f0 @ (snap.positions[0] - snap.positions[1])) > 0

    def test_magnitude_matches_scalar_slope(self, large_params):
        d = 2 * large_params.r_s + 0.01
        snap = Snapshot(positions=[[0, 0], [d, 0]])
        f = ctl.u2_avoidance(snap, 0, large_params)
        expect = -pot.dv_n_dx(d, large_params.agent_barrier())
        assert math.isclose(float(np.linalg.norm(f)), expect, rel_tol=1e-12)

    def test_batch_matches_per_agent(self, large_params):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 3, size=(12, 2))
        snap = Snapshot(positions=pts)
        batch = ctl.u2_all(pts, large_params)
        for i in range(len(pts)):
            assert np.allclose(batch[i], ctl.u2_avoidance(snap, i, large_params),
                               atol=1e-12)

    def test_coincident_rejected(self, large_params):
        snap = Snapshot(positions=[[1, 1], [1, 1]])
        with pytest.raises(CoincidentAgents):
            ctl.u2_avoidance(snap, 0, large_params)


class TestPanelKeeping:
    def test_centerline_normal_components_cancel(self, large_params):
        tube = geo.build_tube((0, 2), (10, 2), (0, -2), (10, -2))
        keeper = PanelKeeper(tube, large_params)
        g = keeper.term((5.0, 0.0))
        assert abs(g[1]) < 1e-9

    def test_pushes_away_from_near_boundary(self, wide_tube, large_params):
        keeper = PanelKeeper(wide_tube, large_params)
        p = wide_tube.p_l1 - 6 * wide_tube.t_l + 0.45 * wide_tube.n_l
        g = keeper.term(p)
        assert float(g @ wide_tube.n_l) > 0

    def test_never_opposes_axis_on_grid(self, wide_tube, large_params):
        keeper = PanelKeeper(wide_tube, large_params)
        rng = np.random.default_rng(4)
        pts = sample_inside(wide_tube, rng, 300)
        margin = large_params.r_s + 1e-3
        keep = ((geo.dist_left(wide_tube, pts) > margin)
                & (geo.dist_right(wide_tube, pts) > margin))
        g = keeper.term_many(pts[keep])
        assert np.all(g @ wide_tube.t_c >= 0)

    def test_default_extension_accepted(self, wide_tube, large_params):
        keeper = PanelKeeper(wide_tube, large_params)
        assert keeper.ext_factor == large_params.ext_factor


class TestProjectedKeeping:
    def test_zero_away_from_both_boundaries(self, wide_tube, large_params):
        u = ctl.u34_projected(wide_tube, (6.0, 0.0), large_params)
        assert np.allclose(u, 0)

    def test_always_parallel_to_axis(self, wide_tube, large_params):
        rng = np.random.default_rng(5)
        pts = sample_inside(wide_tube, rng, 300)
        u = ctl.u34_projected_many(wide_tube, pts, large_params)
        cross = u[:, 0] * wide_tube.t_c[1] - u[:, 1] * wide_tube.t_c[0]
        assert np.all(np.abs(cross) < 1e-12)

    def test_magnitude_matches_scalar_slope(self, wide_tube, large_params):
        d = large_params.r_s + 0.01
        p = wide_tube.p_l1 - 6 * wide_tube.t_l + d * wide_tube.n_l
        u = ctl.u34_projected(wide_tube, p, large_params)
        lam = -pot.dv_n_dx(geo.dist_left(wide_tube, p),
                           large_params.wall_barrier())
        expect = lam * float(wide_tube.t_c @ wide_tube.n_l)
        assert np.allclose(u, expect * wide_tube.t_c)

    def test_never_opposes_axis_in_converging_tube(self, wide_tube,
                                                   large_params):
        rng = np.random.default_rng(6)
        pts = sample_inside(wide_tube, rng, 500)
        u = ctl.u34_projected_many(wide_tube, pts, large_params)
        assert np.all(u @ wide_tube.t_c >= 0)


class TestComposition:
    def test_lone_agent_mid_tube(self, wide_tube, large_params):
        snap = Snapshot(positions=[[6.0, 0.0]])
        cmd = ctl.velocity_command(wide_tube, snap, 0, large_params)
        assert np.allclose(cmd, 2.0 * wide_tube.t_c)
        assert math.isclose(float(np.linalg.norm(cmd)), 2.0)

    def test_huge_repulsion_saturated(self, wide_tube, large_params):
        pos = np.array([[6.0, 0.0]])
        u2 = np.array([[0.0, 10.0]])
        cmd = ctl.commands_many(wide_tube, pos, large_params, u2=u2)[0]
        rep = cmd - 2.0 * wide_tube.t_c
        assert math.isclose(float(np.linalg.norm(rep)), 1.5, rel_tol=1e-12)

    def test_norm_within_envelope(self, wide_tube, large_params):
        rng = np.random.default_rng(7)
        pts = sample_inside(wide_tube, rng, 60)
        margin = large_params.r_s + 1e-2
        pts = pts[(geo.dist_left(wide_tube, pts) > margin)
                  & (geo.dist_right(wide_tube, pts) > margin)][:30]
        snap = Snapshot(positions=pts)
        for i in range(len(pts)):
            for variant in ("basic", "modified"):
                cmd = ctl.velocity_command(wide_tube, snap, i, large_params,
                                           variant)
                n = float(np.linalg.norm(cmd))
                assert 0.5 - 1e-9 <= n <= 3.5 + 1e-9

    def test_unknown_variant_rejected(self, wide_tube, large_params):
        with pytest.raises(ValueError):
            ctl.commands_many(wide_tube, np.array([[6.0, 0.0]]),
                              large_params, variant="fancy")


class TestFeasibility:
    def test_large_scenario_parameters_pass(self, wide_tube, large_params):
        rep = ctl.validate_feasibility(wide_tube, large_params)
        assert rep.ok, rep.format()

    def test_saturating_speed_budget_accepted(self):
        # v + v'_max exactly equal to v_max is the tightest allowed choice
        p = ControlParams(v=2.0, v_max_prime=1.5, v_min=0.5, v_max=3.5,
                          r_s=0.25, r_a=0.5, k_t=1.2)
        assert p.basic_violations() == []

    def test_excess_repulsion_budget_rejected(self, wide_tube):
        p = ControlParams(v=2.0, v_max_prime=2.0, v_min=0.5, v_max=3.5,
                          r_s=0.25, r_a=0.5, k_t=1.2)
        msgs = p.basic_violations()
        assert any("v + v'_max" in m or "v_max" in m for m in msgs)
        rep = ctl.validate_feasibility(wide_tube, p)
        assert not rep.ok

    def test_steep_leg_rejected(self, large_params):
        # left leg at 60 degrees: v * ||t_c - t_l|| = 2 * 2 sin(30) = 2 > 1.5
        t = geo.build_tube((0, 12), (6, 12 - 6 * math.tan(math.radians(60))),
                           (0, -2), (6, -2), k_t=1.2)
        rep = ctl.validate_feasibility(t, large_params)
        failed = [c.name for c in rep.failures()]
        assert "left leg angle" in failed

    def test_chord_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            v = rng.uniform(0.1, 5.0)
            vp = rng.uniform(0.01, 2.0 * v)
            theta = rng.uniform(0.0, math.pi / 2)
            chord = v * 2.0 * math.sin(theta / 2.0)
            bound = ctl.speed_angle_bound(v, vp)
            assert (chord < vp) == (theta < bound) or \
                math.isclose(chord, vp, rel_tol=1e-12)

    def test_blend_band_needs_margin(self, wide_tube):
        p = ControlParams(v=2.0, v_max_prime=1.5, v_min=0.5, v_max=3.5,
                          r_s=0.25, r_a=0.5, k_t=1.0)
        rep = ctl.validate_feasibility(wide_tube, p, variant="modified")
        assert any(c.name == "blend band" and not c.passed for c in rep.checks)

    def test_panel_variant_reports_grid_check(self, wide_tube, large_params):
        rep = ctl.validate_feasibility(wide_tube, large_params,
                                       variant="basic")
        assert any(c.name == "boundary gradient direction" for c in rep.checks)
        assert rep.ok, rep.format()


class TestSpeedEnvelopeSweep:
    def test_random_tubes_random_states(self):
        rng = np.random.default_rng(9)
        checked = 0
        while checked < 2000:
            tube = random_tube(rng, max_tilt_deg=10.0)
            params = ControlParams(v=2.0, v_max_prime=1.5, v_min=0.5,
                                   v_max=3.5, r_s=0.25, r_a=0.5, k_t=1.2)
            if not ctl.validate_feasibility(tube, params).ok:
                continue
            pts = sample_inside(tube, rng, 40)
            d = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            pts = pts[np.min(d, axis=1) > 1e-6]
            cmds = ctl.commands_many(tube, pts, params)
            norms = np.linalg.norm(cmds, axis=1)
            assert np.all(norms >= params.v - params.v_max_prime - 1e-9)
            assert np.all(norms <= params.v + params.v_max_prime + 1e-9)
            checked += len(pts)
