import math
from dataclasses import replace

import numpy as np
import pytest

from sensors import (DetectorParams, EnoseParams, GasCameraParams, MicParams, PointCloudParams, TiltedScannerParams,
                     UVCameraParams, detect_objects_sim, enose_sample, expected_ground_profile, gas_camera_capture,
                     gas_camera_cl, lidar_pointcloud, lidar_scan, mic_capture, render_triple, tilted_scan, uv_capture)
from sensors.enose import concentrations_at, steady_state
from sensors.gascam import background_radiance, pixel_rays, ray_lengths
from sensors.microphone import mic_world_positions
from simworld.acoustics import SPEED_OF_SOUND, acoustic_field
from simworld.geometry import OutOfGridError, fill_rect, raycast_many
from simworld.plume import total_concentration
from simworld.types import (LOGODDS_CLAMP, AcousticSource, DynamicAgent, GasPlume, OilPatch, Pose2D, Species,
                            Waveform, WorldState)

from conftest import free_grid


def _world(grid=None, **kw) -> WorldState:
    return WorldState(time=0.0, grid=grid if grid is not None else free_grid(100, 100), **kw)


class TestLidar:

    def test_empty_world_all_max_range(self):
        scan = lidar_scan(_world(), Pose2D(5.0, 5.0), max_range=3.0)
        assert len(scan) == 360
        assert np.all(scan.ranges == 3.0)

    def test_matches_raycast_per_beam(self):
        grid = free_grid(100, 100)
        fill_rect(grid, (7.0, 0.0, 7.2, 10.0), LOGODDS_CLAMP)
        pose = Pose2D(5.0, 5.0, 0.4)
        scan = lidar_scan(_world(grid), pose, n_beams=90, max_range=6.0)
        expected = raycast_many(grid, pose, pose.theta + scan.angles, 6.0)
        assert np.allclose(scan.ranges, expected)

    def test_agent_disc_dead_ahead(self):
        agent = DynamicAgent('p', 0.3, ((7.0, 5.0),), speed=0.0)
        scan = lidar_scan(_world(agents=(agent,)), Pose2D(5.0, 5.0), max_range=8.0)
        front = int(np.argmin(np.abs(scan.angles)))
        assert scan.angles[front] == 0.0
        assert scan.ranges[front] == pytest.approx(1.7, abs=0.1)

    def test_off_grid_pose(self):
        with pytest.raises(OutOfGridError):
            lidar_scan(_world(), Pose2D(-1.0, 5.0))

    def test_noise_is_seeded(self):
        world = _world(rng_seed=3)
        a = lidar_scan(world, Pose2D(5.0, 5.0), max_range=3.0, noise_sigma=0.05)
        b = lidar_scan(world, Pose2D(5.0, 5.0), max_range=3.0, noise_sigma=0.05)
        assert np.array_equal(a.ranges, b.ranges)
        assert np.all(a.ranges <= 3.0)

    def test_pointcloud_open_floor_lies_on_ground(self):
        cloud = lidar_pointcloud(_world(), Pose2D(5.0, 5.0), PointCloudParams())
        assert cloud.shape[1] == 3 and len(cloud) > 0
        assert np.allclose(cloud[:, 2], 0.0, atol=1e-9)

    def test_tilted_scan_flat_ground(self):
        params = TiltedScannerParams()
        scan = tilted_scan(_world(free_grid(200, 200)), Pose2D(5.0, 10.0), params)
        assert np.allclose(scan.ranges, expected_ground_profile(params), atol=params.step + 1e-9)
        assert scan.ranges[len(scan) // 2] == pytest.approx(math.hypot(0.8, 2.0), abs=0.011)


class TestEnose:

    def test_clean_air_reads_noise_only(self):
        params = EnoseParams()
        sample = None
        for _ in range(20):
            sample = enose_sample(_world(), Pose2D(5.0, 5.0), sample, 0.5, params)
        assert np.allclose(sample.lag_state, 0.0)
        assert max(sample.mox) < 5 * params.mox_noise
        assert sample.ndir_co2 < 5 * params.ndir_noise

    def test_first_order_lag_after_one_tau(self):
        params = EnoseParams()
        world = _world(plumes=(GasPlume((3.0, 5.0), 100.0, wind=(1.0, 0.0)),))
        pose = Pose2D(5.0, 5.0)
        r_ss = steady_state(concentrations_at(world, pose.x, pose.y), params)
        assert r_ss[0] > 0
        sample = None
        steps = int(round(params.tau[0] / 0.1))
        for _ in range(steps):
            sample = enose_sample(world, pose, sample, 0.1, params)
        assert sample.lag_state[0] == pytest.approx(r_ss[0] * (1.0 - math.exp(-1.0)), rel=0.02)

    def test_methane_only_plume_leaves_electrochemical_dark(self):
        params = EnoseParams()
        world = _world(plumes=(GasPlume((3.0, 5.0), 200.0, wind=(1.0, 0.0), species='methane'),))
        r_ss = steady_state(concentrations_at(world, 5.0, 5.0), params)
        assert r_ss[4] == 0.0 and r_ss[3] == 0.0
        assert np.all(r_ss[:3] > 0)
        sample = None
        for _ in range(60):
            sample = enose_sample(world, Pose2D(5.0, 5.0), sample, 1.0, params)
        assert min(sample.mox) > 0.05
        assert sample.electrochemical < 5 * params.ec_noise

    def test_non_positive_dt(self):
        with pytest.raises(ValueError):
            enose_sample(_world(), Pose2D(5.0, 5.0), None, 0.0)


class TestMicrophone:

    def _tone_world(self, position, level=1.0):
        src = AcousticSource(position, Waveform('tone', (1000.0,)), level=level)
        return _world(sources=(src,))

    def test_symmetric_channels_on_mic0_axis(self):
        world = self._tone_world((9.0, 5.0))
        frame = mic_capture(world, Pose2D(5.0, 5.0), 0.05, snr_db=None)
        assert frame.n_mics == 5
        assert np.allclose(frame.channels[1], frame.channels[4], atol=1e-9)
        assert np.allclose(frame.channels[2], frame.channels[3], atol=1e-9)

    def test_delay_differences_match_plane_wave(self):
        params = MicParams()
        pose = Pose2D(5.0, 5.0, 0.3)
        bearing = math.radians(40.0)
        world = self._tone_world((5.0 + 3.43 * math.cos(bearing), 5.0 + 3.43 * math.sin(bearing)))
        delays = np.array([acoustic_field(world, p, 0.0, 0.05, params.fs)[0].delay
                           for p in mic_world_positions(pose, params)])
        u = np.array([math.cos(bearing), math.sin(bearing)])
        offsets = mic_world_positions(pose, params) - np.array([pose.x, pose.y])
        expected = -(offsets @ u) / SPEED_OF_SOUND
        assert np.allclose(delays - delays.mean(), expected - expected.mean(), atol=5e-6)

    def test_nearest_mic_hears_first(self, rng):
        params = MicParams()
        for _ in range(50):
            pose = Pose2D(*rng.uniform(2.0, 8.0, 2), rng.uniform(-math.pi, math.pi))
            source = rng.uniform(0.5, 9.5, 2)
            world = self._tone_world(tuple(source))
            positions = mic_world_positions(pose, params)
            delays = [acoustic_field(world, p, 0.0, 0.05, params.fs)[0].delay for p in positions]
            assert np.argmin(delays) == np.argmin(np.linalg.norm(positions - source, axis=1))

    def test_silence_is_noise_floor(self):
        params = MicParams()
        frame = mic_capture(_world(), Pose2D(5.0, 5.0), 0.25, params=params)
        assert frame.n_samples == 24000
        assert np.sqrt(np.mean(frame.channels ** 2)) == pytest.approx(params.noise_floor, rel=0.05)

    def test_snr_sets_noise_power(self):
        world = self._tone_world((7.0, 5.0))
        clean = mic_capture(world, Pose2D(5.0, 5.0), 0.25, snr_db=None)
        noisy = mic_capture(world, Pose2D(5.0, 5.0), 0.25, snr_db=10.0)
        ratio = np.mean(clean.channels ** 2) / np.mean((noisy.channels - clean.channels) ** 2)
        assert 10 * math.log10(ratio) == pytest.approx(10.0, abs=0.3)

    def test_too_short(self):
        with pytest.raises(ValueError):
            mic_capture(_world(), Pose2D(5.0, 5.0), 0.005)


class TestGasCamera:

    def test_no_plume_frames_equal(self):
        triple = gas_camera_capture(_world(), Pose2D(5.0, 5.0))
        assert triple.shape == (24, 32)
        assert np.allclose(triple.wing_minus, triple.center, rtol=1e-3)
        assert np.allclose(triple.wing_plus, triple.center, rtol=1e-3)

    def test_beer_lambert_identity(self):
        params = GasCameraParams()
        cl = np.full((params.height, params.width), 1234.0)
        wing, center, _ = render_triple(cl, background_radiance(0, params), params)
        assert np.allclose(np.log(wing / center), params.delta_alpha * 1234.0, rtol=1e-12)

    def test_cl_matches_fine_ray_integral(self):
        params = GasCameraParams()
        world = _world(free_grid(120, 100), plumes=(GasPlume((4.0, 5.0), 100.0, wind=(1.0, 0.0)),))
        pose = Pose2D(6.0, 3.0, math.pi / 2)
        cl = gas_camera_cl(world, pose, params)
        az, el = pixel_rays(params)
        length = ray_lengths(world, pose, params)
        col = params.width // 2
        significant = cl[:, col] > 0.05 * cl.max()
        assert significant.any()
        for row in np.flatnonzero(significant):
            h = 1e-3
            s = np.arange(0.0, length[row, col], h) + h / 2
            horiz = s * math.cos(el[row])
            heading = pose.theta + az[col]
            xs = pose.x + horiz * math.cos(heading)
            ys = pose.y + horiz * math.sin(heading)
            zs = np.maximum(params.mount_height + s * math.sin(el[row]), 0.0)
            oracle = float(np.sum(total_concentration(world.plumes, xs, ys, Species.METHANE, zs)) * h)
            assert cl[row, col] == pytest.approx(oracle, rel=0.01)


class TestUVCamera:

    def _patch_world(self, distance):
        return _world(patches=(OilPatch((5.0 + distance, 5.0), 0.25),))

    def test_no_patch_no_difference(self):
        pair = uv_capture(_world(), Pose2D(5.0, 5.0), params=UVCameraParams(noise_sigma=0.0))
        assert np.allclose(pair.uv - pair.ambient, 0.0)

    def test_indoor_patch_at_half_metre(self):
        pair = uv_capture(self._patch_world(0.5), Pose2D(5.0, 5.0), params=UVCameraParams(noise_sigma=0.0))
        diff = pair.uv - pair.ambient
        assert diff.max() == pytest.approx(0.5)
        assert set(np.round(np.unique(diff), 9)) == {0.0, 0.5}

    def test_sunlight_divides_signal(self):
        pair = uv_capture(self._patch_world(0.5), Pose2D(5.0, 5.0), params=UVCameraParams(noise_sigma=0.0),
                          ambient_level=3.0)
        assert (pair.uv - pair.ambient).max() == pytest.approx(0.5 / 4)

    def test_beyond_range_limit(self):
        pair = uv_capture(self._patch_world(1.5), Pose2D(5.0, 5.0), params=UVCameraParams(noise_sigma=0.0))
        assert np.allclose(pair.uv, pair.ambient)


class TestDetections:

    def test_one_visible_agent(self):
        agent = DynamicAgent('op', 0.3, ((8.0, 5.0),), speed=0.0, agent_class='truck')
        dets = detect_objects_sim(_world(agents=(agent,)), Pose2D(5.0, 5.0), miss_rate=0.0, clutter_rate=0.0)
        assert len(dets) == 1
        assert dets.detections[0].cls == 'truck'
        assert dets.detections[0].range == pytest.approx(3.0, abs=0.5)

    def test_agent_behind_wall(self):
        grid = free_grid(100, 100)
        fill_rect(grid, (6.5, 0.0, 6.7, 10.0), LOGODDS_CLAMP)
        agent = DynamicAgent('op', 0.3, ((8.0, 5.0),), speed=0.0)
        dets = detect_objects_sim(_world(grid, agents=(agent,)), Pose2D(5.0, 5.0), miss_rate=0.0, clutter_rate=0.0)
        assert len(dets) == 0

    def test_outside_fov(self):
        agent = DynamicAgent('op', 0.3, ((2.0, 5.0),), speed=0.0)
        dets = detect_objects_sim(_world(agents=(agent,)), Pose2D(5.0, 5.0), miss_rate=0.0, clutter_rate=0.0)
        assert len(dets) == 0

    def test_empirical_miss_rate(self):
        agent = DynamicAgent('op', 0.3, ((8.0, 5.0),), speed=0.0)
        world = _world(agents=(agent,), rng_seed=5)
        params = DetectorParams(miss_rate=0.2, clutter_rate=0.0)
        n = 10_000
        seen = sum(len(detect_objects_sim(replace(world, tick=i), Pose2D(5.0, 5.0), miss_rate=params.miss_rate,
                                          clutter_rate=0.0)) for i in range(n))
        assert 1.0 - seen / n == pytest.approx(0.2, abs=0.012)
