import math
from dataclasses import replace

import numpy as np
import pytest

from config import ConfigError
from simworld.acoustics import SPEED_OF_SOUND, acoustic_field, render_waveform
from simworld.geometry import OutOfGridError, fill_rect, raycast, raycast_many, traverse_cells
from simworld.plume import plume_concentration
from simworld.scenario import load_map, load_scenario, save_map, scenario_from_dict
from simworld.types import (LOGODDS_CLAMP, AcousticSource, DynamicAgent, GasPlume, OccupancyGrid, OdometryNoise,
                            Pose2D, Twist, Waveform, WorldParams, WorldState)
from simworld.world import apply_drive, run_world, step_world

from conftest import SCENARIO_PATH, box_grid, free_grid


def _world(grid=None, **kw) -> WorldState:
    return WorldState(time=0.0, grid=grid if grid is not None else free_grid(100, 100), **kw)


class TestPose:

    def test_theta_normalised_to_half_open_interval(self):
        assert Pose2D(0, 0, -math.pi).theta == pytest.approx(math.pi)
        assert Pose2D(0, 0, 2 * math.pi + 0.5).theta == pytest.approx(0.5)
        assert Pose2D(0, 0, 0.5).theta == 0.5

    def test_between_inverts_compose(self):
        a = Pose2D(1.0, 2.0, 0.7)
        b = Pose2D(-3.0, 0.5, -2.9)
        c = a.compose(a.between(b))
        assert (c.x, c.y, c.theta) == pytest.approx((b.x, b.y, b.theta))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Pose2D(float('nan'), 0.0, 0.0)


class TestApplyDrive:

    def test_zero_command_keeps_pose(self):
        pose = Pose2D(1.0, 2.0, 0.3)
        true_pose, delta = apply_drive(pose, Twist(0.0, 0.0), 0.1)
        assert true_pose.as_tuple() == pytest.approx(pose.as_tuple())
        assert delta.as_tuple() == pytest.approx((0.0, 0.0, 0.0))

    def test_straight_line(self):
        true_pose, delta = apply_drive(Pose2D(0, 0, 0), Twist(1.0, 0.0), 1.0)
        assert true_pose.as_tuple() == pytest.approx((1.0, 0.0, 0.0))
        assert delta.as_tuple() == pytest.approx((1.0, 0.0, 0.0))

    def test_arc_matches_fine_step_integration(self):
        true_pose, _ = apply_drive(Pose2D(0, 0, 0), Twist(1.0, math.pi / 2), 1.0)
        # Euler oracle, 1e5 steps
        n = 100_000
        h = 1.0 / n
        th = np.arange(n) * h * math.pi / 2
        x = float(np.sum(np.cos(th)) * h)
        y = float(np.sum(np.sin(th)) * h)
        assert true_pose.theta == pytest.approx(math.pi / 2)
        assert true_pose.x == pytest.approx(x, abs=1e-4)
        assert true_pose.y == pytest.approx(y, abs=1e-4)
        assert true_pose.x == pytest.approx(2 / math.pi)

    def test_noise_needs_positive_alphas(self):
        with pytest.raises(ValueError):
            OdometryNoise(alpha1=-0.1)

    def test_non_positive_dt_rejected(self):
        with pytest.raises(ValueError):
            apply_drive(Pose2D(), Twist(1.0, 0.0), 0.0)


class TestStepWorld:

    def test_still_agent_does_not_move(self):
        agent = DynamicAgent('a', 0.3, ((2.0, 2.0), (5.0, 2.0)), speed=0.0)
        world = run_world(_world(agents=(agent,)), 20, dt=0.1)
        assert world.agents[0].position == pytest.approx((2.0, 2.0))

    def test_agent_reaches_far_waypoint(self):
        agent = DynamicAgent('a', 0.3, ((0.0, 5.0), (10.0, 5.0)), speed=1.0)
        world = run_world(_world(agents=(agent,)), 100, dt=0.1)
        assert world.agents[0].position == pytest.approx((10.0, 5.0), abs=1e-9)

    def test_same_seed_is_bit_identical(self):
        params = WorldParams(odometry_noise=OdometryNoise(0.05, 0.05, 0.05, 0.05))
        agent = DynamicAgent('a', 0.3, ((1.0, 1.0), (8.0, 1.0), (8.0, 8.0)), speed=0.7)
        plume = GasPlume((2.0, 2.0), 50.0)
        base = _world(agents=(agent,), plumes=(plume,), robot_pose=Pose2D(5, 5, 0), rng_seed=42,
                      params=params).with_command(Twist(0.3, 0.2))
        a = run_world(base, 1000)
        b = run_world(base, 1000)
        assert a.fingerprint() == b.fingerprint()
        c = run_world(replace(base, rng_seed=43), 1000)
        assert c.fingerprint() != a.fingerprint()

    def test_twist_clipped_to_limits(self):
        world = step_world(_world(robot_pose=Pose2D(5, 5, 0)).with_command(Twist(5.0, 0.0)), 0.1)
        assert world.robot_pose.x == pytest.approx(5.0 + 0.1 * WorldParams().limits.v_max)

    @pytest.mark.parametrize('dt', [0.0, -0.1, 0.6, float('nan'), float('inf')])
    def test_invalid_dt(self, dt):
        with pytest.raises(ValueError):
            step_world(_world(), dt)

    def test_schedule_changes_leak_rate(self):
        data = {'map': {'size': [5.0, 5.0], 'resolution': 0.1},
                'plumes': [{'id': 'leak', 'source': [1.0, 1.0], 'emission_rate': 10.0}],
                'schedules': [{'at': 0.25, 'plume': 'leak', 'emission_rate': 80.0}]}
        world = scenario_from_dict(data).world
        assert run_world(world, 4, dt=0.05).plumes[0].emission_rate == 10.0
        assert run_world(world, 6, dt=0.05).plumes[0].emission_rate == 80.0


class TestPlume:

    def test_upwind_is_zero(self):
        plume = GasPlume((5.0, 5.0), 100.0, wind=(1.0, 0.0))
        assert plume_concentration(plume, (4.0, 5.0)) == 0.0
        assert plume_concentration(plume, (5.0, 9.0)) == 0.0

    def test_crosswind_symmetry(self, rng):
        plume = GasPlume((0.0, 0.0), 80.0, wind=(1.5, 0.7))
        ex, ey = math.cos(0.7), math.sin(0.7)
        for d, c in rng.uniform([0.1, 0.0], [6.0, 2.0], size=(20, 2)):
            left = plume_concentration(plume, (d * ex - c * ey, d * ey + c * ex))
            right = plume_concentration(plume, (d * ex + c * ey, d * ey - c * ex))
            assert left == pytest.approx(right, rel=1e-12)

    @pytest.mark.parametrize('height', [0.0, 1.0])
    def test_falls_off_crosswind(self, rng, height):
        plume = GasPlume((0.0, 0.0), 80.0, wind=(1.5, 0.7), height=height)
        ex, ey = math.cos(0.7), math.sin(0.7)
        for d in rng.uniform(0.1, 6.0, 10):
            offsets = np.linspace(0.0, 3.0, 61) * rng.choice([-1.0, 1.0])
            values = [plume_concentration(plume, (d * ex - c * ey, d * ey + c * ex)) for c in offsets]
            assert np.all(np.diff(values) <= 0.0)

    def test_closed_form_value(self):
        plume = GasPlume((0.0, 0.0), 100.0, wind=(1.0, 0.0))
        # ground-level source on the axis: C = Q / (pi u sigma^2), sigma = 0.08 d^0.9
        q = 100.0e-6 / 60.0 * 0.668
        sigma = 0.08 * 2.0 ** 0.9
        expected = q / (math.pi * 1.0 * sigma ** 2) / 1.204 * 1e6
        value = plume_concentration(plume, (2.0, 0.0))
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(13.21, rel=2e-3)

    def test_species_filter(self):
        plume = GasPlume((0.0, 0.0), 100.0, species='co2')
        assert plume_concentration(plume, (2.0, 0.0), 'methane') == 0.0
        assert plume_concentration(plume, (2.0, 0.0), 'co2') > 0.0

    def test_elevated_source_reduces_ground_level_near_source(self):
        ground = GasPlume((0.0, 0.0), 100.0)
        raised = GasPlume((0.0, 0.0), 100.0, height=1.0)
        assert plume_concentration(raised, (1.0, 0.0)) < plume_concentration(ground, (1.0, 0.0))

    def test_non_finite_point(self):
        with pytest.raises(ValueError):
            plume_concentration(GasPlume((0.0, 0.0), 1.0), (float('nan'), 0.0))


def _march(grid: OccupancyGrid, x, y, angle, max_range, step=1e-4):
    """Fixed-step ray march; first sample inside an occupied cell."""
    t = np.arange(0.0, max_range, step)
    rows, cols = grid.cells_of(np.column_stack((x + t * math.cos(angle), y + t * math.sin(angle))))
    outside = (rows < 0) | (rows >= grid.height) | (cols < 0) | (cols >= grid.width)
    stop = outside.copy()
    stop[~outside] = grid.occupied_mask()[rows[~outside], cols[~outside]]
    if not stop.any():
        return max_range
    i = int(np.argmax(stop))
    return max_range if outside[i] else float(t[i])


class TestRaycast:

    def test_empty_grid_returns_max_range(self):
        grid = free_grid(100, 100)
        assert raycast(grid, Pose2D(5.0, 5.0), 0.3, 3.0) == 3.0

    def test_wall_three_metres_ahead(self):
        grid = free_grid(200, 200, resolution=0.05)
        fill_rect(grid, (4.0, 0.0, 4.05, 10.0), LOGODDS_CLAMP)
        assert raycast(grid, Pose2D(1.0, 5.0), 0.0, 8.0) == pytest.approx(3.0, abs=0.05)

    def test_origin_inside_obstacle_is_zero(self):
        grid = box_grid(20, 20)
        assert raycast(grid, Pose2D(0.05, 0.05), 0.0, 5.0) == 0.0

    def test_origin_outside_grid(self):
        with pytest.raises(OutOfGridError):
            raycast(free_grid(10, 10), Pose2D(-1.0, 0.5), 0.0, 1.0)

    def test_matches_ray_march_oracle(self):
        rng = np.random.default_rng(7)
        agree = total = 0
        for _ in range(36):
            grid = free_grid(30, 30, resolution=0.1)
            grid.logodds[rng.random((30, 30)) < 0.1] = LOGODDS_CLAMP
            free = np.argwhere(~grid.occupied_mask())
            row, col = free[rng.integers(len(free))]
            cx, cy = grid.cell_center(row, col)
            x, y = cx + rng.uniform(-0.04, 0.04), cy + rng.uniform(-0.04, 0.04)
            angles = rng.uniform(-math.pi, math.pi, 10)
            got = raycast_many(grid, Pose2D(x, y), angles, 2.5)
            for a, r in zip(angles, got):
                marched = _march(grid, x, y, a, 2.5)
                # the march can step over a clipped cell corner, never the reverse
                assert r <= marched + 1e-3
                agree += abs(r - marched) <= 0.1 * math.sqrt(2)
                total += 1
        assert agree / total >= 0.99

    def test_traverse_cells_covers_segment(self):
        grid = free_grid(20, 20)
        cells = traverse_cells(grid, 0.05, 0.05, 1.05, 0.05)
        assert cells[0] == (0, 0)
        assert cells[-1] == (0, 10)
        assert len(cells) == 11


class TestAcoustics:

    def _world_with(self, x):
        src = AcousticSource((x, 0.0), Waveform('tone', (500.0,)), level=2.0)
        return _world(free_grid(10, 10), sources=(src,))

    def test_gain_and_delay_at_one_metre(self):
        (p,) = acoustic_field(self._world_with(1.0), (0.0, 0.0), 0.0, 0.25, 96000)
        assert p.gain == pytest.approx(2.0)
        assert p.delay == pytest.approx(1.0 / SPEED_OF_SOUND)

    def test_spherical_spreading(self):
        (near,) = acoustic_field(self._world_with(1.5), (0.0, 0.0), 0.0, 0.25, 96000)
        (far,) = acoustic_field(self._world_with(3.0), (0.0, 0.0), 0.0, 0.25, 96000)
        assert far.gain == pytest.approx(near.gain / 2)

    @pytest.mark.parametrize('fs', [48000.0, 0.0])
    def test_sample_rate_is_fixed(self, fs):
        with pytest.raises(ValueError, match='fs must be'):
            acoustic_field(self._world_with(1.0), (0.0, 0.0), 0.0, 0.25, fs)

    def test_delay_at_6_86_m(self):
        (p,) = acoustic_field(self._world_with(6.86), (0.0, 0.0), 0.0, 0.25, 96000)
        assert p.delay == pytest.approx(0.020)

    def test_broadband_is_time_consistent(self):
        wf = Waveform('broadband', seed=3)
        t = np.arange(2000) / 96000.0
        assert np.array_equal(render_waveform(wf, t)[500:], render_waveform(wf, t[500:]))

    def test_tone_above_nyquist_rejected(self):
        with pytest.raises(ValueError):
            Waveform('tone', (50000.0,))


class TestScenario:

    def test_wastewater_loads(self, wastewater):
        assert wastewater.name == 'wastewater'
        assert wastewater.reference_grid.shape == (90, 140)
        assert len(wastewater.world.plumes) == 1
        assert sum(s.anomalous for s in wastewater.world.sources) == 1
        assert wastewater.reference_grid.ground_depth.max() == pytest.approx(1.0)
        row, col = wastewater.reference_grid.world_to_cell(7.15, 2.0)
        assert wastewater.reference_grid.occupied_mask()[row, col]
        row, col = wastewater.reference_grid.world_to_cell(7.15, 5.0)
        assert not wastewater.reference_grid.occupied_mask()[row, col]

    def test_variant_moves_pallet_but_keeps_reference(self, wastewater):
        moved = load_scenario(SCENARIO_PATH, 'second_round')
        assert moved.digest != wastewater.digest
        assert np.array_equal(moved.reference_grid.logodds, wastewater.reference_grid.logodds)
        occ = moved.world.grid.occupied_mask()
        assert occ[moved.world.grid.world_to_cell(13.2, 1.4)]
        assert not occ[moved.world.grid.world_to_cell(10.4, 7.0)]

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            load_scenario(SCENARIO_PATH, 'nope')

    def test_map_bitmap_roundtrip(self, tmp_path):
        grid = box_grid(30, 20)
        fill_rect(grid, (1.0, 1.0, 1.5, 1.5), LOGODDS_CLAMP)
        loaded = load_map(save_map(grid, tmp_path / 'room'))
        assert loaded.shape == grid.shape
        assert np.array_equal(loaded.occupied_mask(), grid.occupied_mask())
