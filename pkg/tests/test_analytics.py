import logging
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from analytics import (APPEARED, DISAPPEARED, DoaParams, FlowModel, GasImage, ModelFileError, SignatureModel, TrainingDiverged,
                       aliasing_limit, classify_gas_signature, concentration_length, detect_oil, diff_maps,
                       doa_estimate, estimate_flow_rate, load_model, roc_auc, save_model, sound_anomaly_score,
                       train_autoencoder, train_flow_model, train_signature_model)
from analytics.autoencoder import TrainParams, fit_threshold, init_model
from analytics.doa import find_peaks
from analytics.gas_signature import classify_vector
from analytics.sound_class import classify_features
from analytics.synth import capture_sequence, flow_dataset, leak_world, sound_class_dataset, sound_features, synth_frame
from sensors import GasCameraParams, UVCameraParams, enose_sample, gas_camera_capture, uv_capture
from sensors.gascam import background_radiance, gas_camera_cl, pixel_rays, render_triple
from sensors.microphone import MicParams
from sensors.types import FramePair, FrameTriple, GasSample, MicFrame
from simworld.types import LOGODDS_CLAMP, GasPlume, OilPatch, Pose2D, Waveform, WaveformKind, WorldState

from conftest import free_grid


def _world(grid=None, **kw) -> WorldState:
    return WorldState(time=0.0, grid=grid if grid is not None else free_grid(100, 100), **kw)


def _angle_error(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def _multitone(freqs, seed=0) -> Waveform:
    return Waveform(WaveformKind.MULTITONE, tuple(freqs), tuple(1.0 for _ in freqs), seed)


class TestDoa:

    @pytest.mark.parametrize('azimuth', [0.0, 37.0, 123.0, 250.0, 301.5])
    def test_single_source(self, azimuth):
        frame = synth_frame(_multitone((450.0, 800.0, 1250.0, 1700.0)), azimuth, snr_db=20.0, seed=3)
        result = doa_estimate(frame)
        assert _angle_error(result.strongest, azimuth) <= 2.0

    def test_two_tonal_sources(self):
        a = synth_frame(_multitone((600.0,)), 40.0, snr_db=None)
        b = synth_frame(_multitone((1400.0,)), 60.0, snr_db=None)
        noise = np.random.default_rng(5).normal(0.0, 0.05, a.channels.shape)
        frame = MicFrame(a.fs, a.channels + b.channels + noise, 0.0, a.radius, a.mic_angles)
        result = doa_estimate(frame)
        assert len(result.azimuths) >= 2
        found = sorted(result.azimuths[:2])
        assert _angle_error(found[0], 40.0) <= 5.0
        assert _angle_error(found[1], 60.0) <= 5.0

    def test_classic_srp_spectrum(self):
        noise = Waveform(WaveformKind.BROADBAND, (), (), 7, noise_level=1.0)
        frame = synth_frame(noise, 200.0, snr_db=20.0)
        result = doa_estimate(frame, params=DoaParams(method='srp'))
        assert _angle_error(result.strongest, 200.0) <= 3.0
        assert result.powers.max() == pytest.approx(1.0)

    def test_frame_shorter_than_window(self):
        frame = synth_frame(_multitone((500.0,)), 0.0, duration=0.005)
        with pytest.raises(ValueError, match='FFT window'):
            doa_estimate(frame)

    def test_bad_band(self):
        frame = synth_frame(_multitone((500.0,)), 0.0)
        with pytest.raises(ValueError):
            doa_estimate(frame, f_band=(2000.0, 300.0))

    def test_aliasing_limit(self):
        assert aliasing_limit(0.08) == pytest.approx(343.0 / 0.16)

    @staticmethod
    def _trial_errors(freqs, seed, snr_db=10.0):
        rng = np.random.default_rng(seed)
        errors = []
        for k, f in enumerate(freqs):
            azimuth = float(rng.uniform(0.0, 360.0))
            frame = synth_frame(_multitone((float(f),)), azimuth, snr_db=snr_db, seed=seed + k)
            errors.append(_angle_error(doa_estimate(frame).strongest, azimuth))
        return np.array(errors)

    @staticmethod
    def _sidelobe_level(freq):
        frame = synth_frame(_multitone((freq,)), 90.0, snr_db=None)
        result = doa_estimate(frame, f_band=(freq - 60.0, freq + 60.0), params=DoaParams(method='srp'))
        peaks = find_peaks(result.powers, result.grid, 0.0, 20.0, 2)
        if len(peaks) < 2:
            return 0.0
        return float(result.powers[np.flatnonzero(result.grid == peaks[1])[0]])

    @pytest.mark.slow
    def test_tonal_median_error(self):
        freqs = np.random.default_rng(21).uniform(300.0, 2000.0, 500)
        assert np.median(self._trial_errors(freqs, 100)) <= 5.0

    @pytest.mark.slow
    def test_tone_just_below_aliasing_limit(self):
        assert np.median(self._trial_errors(np.full(100, 2000.0), 200)) <= 5.0

    def test_tone_above_aliasing_limit(self, caplog):
        assert aliasing_limit(0.08) < 3000.0
        frame = synth_frame(_multitone((3000.0,)), 90.0, snr_db=10.0)
        with caplog.at_level(logging.WARNING, logger='analytics.doa'):
            doa_estimate(frame)
        assert 'aliasing limit' not in caplog.text
        with caplog.at_level(logging.WARNING, logger='analytics.doa'):
            doa_estimate(frame, f_band=(2500.0, 3500.0))
        assert 'aliasing limit' in caplog.text
        # the steered response grows strong sidelobes past the limit
        assert self._sidelobe_level(3000.0) > 0.05
        assert self._sidelobe_level(3000.0) > self._sidelobe_level(1000.0)

    @pytest.mark.slow
    def test_two_sources_resolved(self):
        rng = np.random.default_rng(31)
        resolved = 0
        for trial in range(200):
            f1 = float(rng.uniform(300.0, 1700.0))
            f2 = float(rng.uniform(f1 + 300.0, 2000.0))
            az1 = float(rng.uniform(0.0, 360.0))
            az2 = (az1 + float(rng.uniform(20.0, 180.0))) % 360.0
            a = synth_frame(_multitone((f1,)), az1, snr_db=None)
            b = synth_frame(_multitone((f2,)), az2, snr_db=None)
            mixed = a.channels + b.channels
            sigma = math.sqrt(np.mean(mixed ** 2) / 10.0 ** (20.0 / 10.0))
            noise = np.random.default_rng([trial, 7]).normal(0.0, sigma, mixed.shape)
            result = doa_estimate(MicFrame(a.fs, mixed + noise, 0.0, a.radius, a.mic_angles))
            if len(result.azimuths) < 2:
                continue
            found = result.azimuths[:2]
            direct = max(_angle_error(found[0], az1), _angle_error(found[1], az2))
            swapped = max(_angle_error(found[0], az2), _angle_error(found[1], az1))
            resolved += min(direct, swapped) <= 5.0
        assert resolved >= 180

    @pytest.mark.parametrize('gain', [0.1, 10.0])
    def test_peak_is_gain_invariant(self, gain):
        frame = synth_frame(_multitone((450.0, 900.0, 1600.0)), 212.0, snr_db=10.0, seed=4)
        scaled = MicFrame(frame.fs, gain * frame.channels, frame.stamp, frame.radius, frame.mic_angles)
        base, result = doa_estimate(frame), doa_estimate(scaled)
        assert np.argmax(result.powers) == np.argmax(base.powers)
        np.testing.assert_allclose(result.powers, base.powers, atol=1e-9)


@pytest.fixture(scope='module')
def pump_features():
    return sound_features('pump', 150, seed=0)


@pytest.fixture(scope='module')
def pump_model(pump_features):
    return train_autoencoder(pump_features, TrainParams(epochs=120))


class TestAutoencoder:

    def test_gradients_match_finite_differences(self, rng):
        model = init_model((6, 4, 2, 4, 6), 3, np.zeros(6), np.ones(6))
        x = rng.normal(size=(5, 6))
        _, gw, gb = model.loss_and_grads(x)
        h = 1e-6
        for k in (0, 2, 3):
            for idx in [(0, 0), (1, 1), (model.weights[k].shape[0] - 1, model.weights[k].shape[1] - 1)]:
                saved = model.weights[k][idx]
                model.weights[k][idx] = saved + h
                up = model.loss_and_grads(x)[0]
                model.weights[k][idx] = saved - h
                down = model.loss_and_grads(x)[0]
                model.weights[k][idx] = saved
                assert gw[k][idx] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)
            saved = model.biases[k][0]
            model.biases[k][0] = saved + h
            up = model.loss_and_grads(x)[0]
            model.biases[k][0] = saved - h
            down = model.loss_and_grads(x)[0]
            model.biases[k][0] = saved
            assert gb[k][0] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-8)

    def test_training_lowers_loss(self, pump_model):
        assert pump_model.loss_history[-1] < pump_model.loss_history[0]
        assert len(pump_model.loss_history) == 121

    def test_training_samples_below_threshold(self, pump_model, pump_features):
        errors = pump_model.errors(pump_features)
        assert np.mean(errors <= pump_model.threshold) >= 0.99

    def test_threshold_covers_heavy_tail(self):
        errors = np.r_[np.full(140, 1.0), np.linspace(2.0, 40.0, 10)]
        threshold = fit_threshold(errors)
        assert threshold >= errors.mean() + 3.0 * errors.std()
        assert np.mean(errors <= threshold) >= 0.99

    def test_threshold_gaussian_errors(self, rng):
        errors = np.abs(rng.normal(1.0, 0.01, 1000))
        assert fit_threshold(errors) == pytest.approx(errors.mean() + 3.0 * errors.std())

    def test_silence_is_anomalous(self, pump_model):
        params = MicParams()
        frame = MicFrame(params.fs, np.zeros((5, int(params.fs * 0.25))), 0.0, params.radius)
        score, anomalous = sound_anomaly_score(frame, pump_model)
        assert anomalous and score > pump_model.threshold

    def test_too_few_samples(self, rng):
        with pytest.raises(ValueError, match='at least'):
            train_autoencoder(rng.normal(size=(50, 64)))

    def test_divergence_is_reported(self, rng):
        with pytest.raises(TrainingDiverged, match='learning rate'):
            train_autoencoder(rng.normal(size=(120, 64)), TrainParams(lr=1e6, epochs=200))

    def test_roc_auc(self):
        assert roc_auc([0.1, 0.2], [0.3, 0.4]) == 1.0
        assert roc_auc([0.3, 0.4], [0.1, 0.2]) == 0.0

    @pytest.mark.slow
    def test_separates_broadband_bursts(self):
        model = train_autoencoder(sound_features('pump', 400, seed=1), TrainParams(epochs=300))
        normal = model.errors(sound_features('pump', 100, seed=2))
        anomalous = model.errors(sound_features('anomalous', 100, seed=3))
        assert roc_auc(normal, anomalous) >= 0.9


class TestSoundClass:

    def test_held_out_accuracy(self, models):
        features, labels = sound_class_dataset(10, seed=100)
        predicted = [classify_features(f, models['soundclass'])[0] for f in features]
        assert np.mean(np.array(predicted) == np.array(labels)) >= 0.8


def _sample(values, stamp=0.0) -> GasSample:
    return GasSample(stamp, tuple(values[:3]), values[3], values[4], 55.0, (1.0, 0.0))


@pytest.fixture(scope='module')
def signature_model():
    return train_signature_model(n_per_class=30)


class TestGasSignature:

    def test_zero_readings_are_clean(self, signature_model):
        assert classify_gas_signature([_sample([0.0] * 5)] * 5, signature_model) == ('clean', 1.0)

    def test_methane_plume(self, signature_model, world_params_still):
        world = _world(plumes=(GasPlume((4.0, 5.0), 100.0, wind=(1.0, 0.0)),), params=world_params_still)
        pose = Pose2D(6.0, 5.0)
        samples, prev = [], None
        for k in range(120):
            prev = enose_sample(replace(world, time=0.5 * k), pose, prev, 0.5)
            samples.append(prev)
        label, confidence = classify_gas_signature(samples[-5:], signature_model)
        assert label == 'methane'
        assert confidence > 0

    def test_equidistant_vector(self):
        model = SignatureModel(('a', 'b'), np.eye(5)[:2])
        label, margin = classify_vector(np.array([1.0, 1.0, 0.0, 0.0, 0.0]), model)
        assert label == 'a'
        assert margin == pytest.approx(0.0, abs=1e-12)

    def test_non_unit_centroids_rejected(self):
        with pytest.raises(ValueError, match='unit vectors'):
            SignatureModel(('a', 'b'), 2.0 * np.eye(5)[:2])

    @pytest.mark.parametrize('scale', [0.5, 3.0, 20.0])
    def test_label_is_scale_invariant(self, signature_model, rng, scale):
        for _ in range(20):
            window = [_sample([*rng.uniform(0.1, 2.0, 3), *rng.uniform(5.0, 100.0, 2)], stamp=float(k))
                      for k in range(5)]
            scaled = [replace(s, mox=tuple(scale * m for m in s.mox), ndir_co2=scale * s.ndir_co2,
                              electrochemical=scale * s.electrochemical) for s in window]
            label, margin = classify_gas_signature(window, signature_model)
            scaled_label, scaled_margin = classify_gas_signature(scaled, signature_model)
            assert scaled_label == label
            assert scaled_margin == pytest.approx(margin, abs=1e-9)

    def test_short_window(self, signature_model):
        with pytest.raises(ValueError, match='at least 5'):
            classify_gas_signature([_sample([0.0] * 5)] * 4, signature_model)


def _triple(cl, params=GasCameraParams(), seed=0, rng=None) -> FrameTriple:
    az, el = pixel_rays(params)
    wing, center, wing_plus = render_triple(cl, background_radiance(seed, params), params, rng)
    return FrameTriple(wing, center, wing_plus, az, el, 0.0, Pose2D(), params.delta_alpha)


class TestGasImaging:

    def test_uniform_cl_recovered(self):
        params = GasCameraParams()
        image = concentration_length(_triple(np.full((params.height, params.width), 1000.0), params))
        assert image.valid.all()
        assert np.allclose(image.cl, 1000.0, rtol=1e-9)

    def test_no_plume_reads_noise_level(self):
        image = concentration_length(gas_camera_capture(_world(), Pose2D(5.0, 5.0)))
        assert image.cl.max() < 2.0

    def test_rendered_plume_matches_ray_integrals(self):
        params = GasCameraParams()
        world = _world(free_grid(120, 100), plumes=(GasPlume((4.0, 5.0), 100.0, wind=(1.0, 0.0)),))
        truth = gas_camera_cl(world, Pose2D(6.0, 3.0, math.pi / 2), params)
        image = concentration_length(_triple(truth, params))
        plume = truth > 1.0
        assert plume.sum() > 10
        rms = math.sqrt(np.mean((image.cl[plume] - truth[plume]) ** 2)) / math.sqrt(np.mean(truth[plume] ** 2))
        assert rms <= 0.02

    def test_dark_pixels_invalid(self):
        params = GasCameraParams()
        triple = _triple(np.zeros((params.height, params.width)), params)
        triple.center[0, 0] = 0.5
        image = concentration_length(triple)
        assert not image.valid[0, 0]
        assert image.cl[0, 0] == 0.0
        assert image.valid.sum() == params.height * params.width - 1

    def test_bad_delta_alpha(self):
        params = GasCameraParams()
        with pytest.raises(ValueError, match='delta_alpha'):
            concentration_length(_triple(np.zeros((params.height, params.width)), params), delta_alpha=0.0)


def _images(cl_value, n=5, pose=Pose2D()):
    return [GasImage(np.full((24, 32), cl_value), np.ones((24, 32), dtype=bool), 0.2 * k, pose) for k in range(n)]


class TestFlowRate:

    def test_zero_images_give_bias(self):
        model = FlowModel(np.ones(4), 7.0, np.zeros(4), np.ones(4))
        assert estimate_flow_rate(_images(0.0), model) == pytest.approx(7.0)

    def test_never_negative(self):
        model = FlowModel(np.ones(4), -3.0, np.zeros(4), np.ones(4))
        assert estimate_flow_rate(_images(0.0), model) == 0.0

    def test_too_few_frames(self):
        with pytest.raises(ValueError, match='at least 5'):
            estimate_flow_rate(_images(1.0, n=4), FlowModel(np.ones(4), 0.0, np.zeros(4), np.ones(4)))

    def test_moving_camera_rejected(self):
        images = _images(1.0)
        images[-1] = GasImage(images[-1].cl, images[-1].valid, 1.0, Pose2D(1.0, 0.0))
        with pytest.raises(ValueError, match='stationary'):
            estimate_flow_rate(images, FlowModel(np.ones(4), 0.0, np.zeros(4), np.ones(4)))

    def test_larger_leak_larger_estimate(self, models):
        estimates = []
        for rate in (100.0, 200.0, 400.0):
            world = leak_world(rate, seed=9)
            estimates.append(estimate_flow_rate(capture_sequence(world, Pose2D(5.0, 3.0, math.pi / 2)),
                                                models['flow']))
        assert estimates[0] <= estimates[1] <= estimates[2]
        assert estimates[2] > estimates[0]

    @pytest.mark.slow
    def test_rank_fidelity_on_held_out_leaks(self):
        train = flow_dataset(np.random.default_rng(0).uniform(20.0, 200.0, 60), seed=0)
        model = train_flow_model([s for s, _ in train], [r for _, r in train])
        test = flow_dataset(np.linspace(20.0, 200.0, 20), seed=1)
        predicted = np.array([estimate_flow_rate(s, model) for s, _ in test])
        truth = np.array([r for _, r in test])
        assert spearmanr(predicted, truth).correlation >= 0.9
        assert np.mean(np.abs(predicted - truth)) <= 20.0


class TestOil:

    def _pair(self, distance, tick=0, ambient_level=None):
        world = _world(patches=(OilPatch((5.0 + distance, 5.0), 0.25),), tick=tick)
        return uv_capture(world, Pose2D(5.0, 5.0), params=UVCameraParams(), ambient_level=ambient_level)

    def test_identical_frames(self):
        image = np.random.default_rng(0).uniform(0.2, 0.4, (24, 32))
        pair = FramePair(image, image.copy(), 0.0, 0.0, Pose2D(), np.linspace(0.2, 1.6, 24),
                         np.linspace(-0.5, 0.5, 32))
        assert detect_oil(pair) == []

    def test_patch_at_half_metre(self):
        regions = detect_oil(self._pair(0.5))
        assert len(regions) == 1
        assert regions[0].centroid_xy == pytest.approx((5.5, 5.0), abs=0.15)
        assert regions[0].mean_contrast > 0.1

    def test_beyond_range_limit(self):
        assert detect_oil(self._pair(1.5)) == []

    def test_detection_rate_within_a_metre(self):
        hits = sum(bool(detect_oil(self._pair(d, tick))) for d in (0.3, 0.5, 0.8) for tick in range(20))
        assert hits >= 57

    def test_sunlight_weakens_contrast(self):
        dark = detect_oil(self._pair(0.5))[0]
        bright = detect_oil(self._pair(0.5, ambient_level=3.0))
        assert not bright or bright[0].mean_contrast < dark.mean_contrast


class TestMapDiff:

    def test_identical_maps(self):
        grid = free_grid()
        assert diff_maps(grid, grid.copy()) == []

    def test_new_box(self):
        a = free_grid()
        b = a.copy()
        b.logodds[10:12, 20:25] = LOGODDS_CLAMP
        regions = diff_maps(a, b)
        assert len(regions) == 1
        assert regions[0].polarity == APPEARED
        assert regions[0].cells == 10
        assert regions[0].bbox == (10, 20, 11, 24)

    def test_small_blobs_and_ignored_cells_dropped(self):
        a = free_grid()
        b = a.copy()
        b.logodds[5, 5:8] = LOGODDS_CLAMP
        b.logodds[20:23, 20:23] = LOGODDS_CLAMP
        ignore = np.zeros(a.shape, dtype=bool)
        ignore[20:23, 20:23] = True
        assert diff_maps(a, b, ignore=ignore) == []

    def test_unknown_cells_never_count(self):
        a = free_grid()
        b = a.copy()
        b.logodds[10:15, 10:15] = 0.0
        assert diff_maps(a, b) == []

    def test_geometry_mismatch(self):
        with pytest.raises(ValueError, match='geometry'):
            diff_maps(free_grid(40, 40), free_grid(40, 41))

    def test_moved_pallet(self, default_config):
        from agents.robot_agent import world_params
        from conftest import SCENARIO_PATH
        from simworld.scenario import load_scenario
        second = load_scenario(SCENARIO_PATH, 'second_round', params=world_params(default_config))
        regions = diff_maps(second.reference_grid, second.world.grid)
        assert sorted(r.polarity for r in regions) == [APPEARED, DISAPPEARED]
        moved = {r.polarity: r.centroid_xy for r in regions}
        assert moved[DISAPPEARED] == pytest.approx((10.4, 7.0), abs=0.1)
        assert moved[APPEARED] == pytest.approx((13.2, 1.4), abs=0.1)


class TestModelFiles:

    def test_save_and_load(self, tmp_path, signature_model):
        path = save_model(signature_model, tmp_path / 'signature.psm')
        loaded = load_model(path, 'signature')
        assert loaded.labels == signature_model.labels
        assert np.array_equal(loaded.centroids, signature_model.centroids)

    def test_wrong_kind(self, tmp_path, signature_model):
        path = save_model(signature_model, tmp_path / 'signature.psm')
        with pytest.raises(ModelFileError, match='expected flow'):
            load_model(path, 'flow')

    def test_corrupt_file(self, tmp_path, signature_model):
        path = save_model(signature_model, tmp_path / 'signature.psm')
        data = bytearray(path.read_bytes())
        data[20] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFileError, match='checksum'):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFileError, match='not found'):
            load_model(tmp_path / 'nope.psm')
