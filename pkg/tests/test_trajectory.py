import math

import numpy as np
import pytest

from ionhbt import correlator, dicke
from ionhbt.campaign import repump_rate_for_dwell, run_campaign, simulate_position
from ionhbt.geometry import DetectionDirection
from ionhbt.params import AtomParams, DetectorParams, LaserParams, ParameterError, \
    default_config
from ionhbt.streams import seconds_to_ps
from ionhbt.trajectory import (
    TrajectoryRunSpec,
    _split_channels,
    expected_detected_rate,
    run_trajectory,
)

LASER = LaserParams()
ATOM = AtomParams()
GAMMA = ATOM.linewidth


@pytest.fixture(scope="module")
def system2():
    return dicke.build_two_level_system(LASER, ATOM)


def make_spec(delta=0.0, duration=0.01, seed=99, eta=1.0, **kwargs):
    return TrajectoryRunSpec(
        seed=seed, duration=duration,
        detection_direction=DetectionDirection(phase=delta),
        collection_weight=eta, **kwargs)


def stream_g2_zero(times, duration, bin_width=0.4e-9, window=200e-9):
    tags = np.unique(seconds_to_ps(times))
    hist = correlator.correlate(tags, tags, bin_width, window)
    norm = correlator.normalize(hist)
    return correlator.g2_zero_estimate(norm)


class TestChannelCompletion:
    def test_mode_split_reconstructs_dissipator(self, system2):
        # detected + residual + orthogonal channels must add up to the
        # independent per-ion decay exactly, for any collection weight
        lows, gamma, *_ = _split_channels(system2)
        s1, s2 = lows
        total_expected = gamma * (s1.conj().T @ s1 + s2.conj().T @ s2)
        for eta in (0.0, 1e-3, 0.3, 1.0):
            for delta in (0.0, 1.1, math.pi):
                d = s1 + np.exp(1j * delta) * s2
                d_orth = s1 - np.exp(1j * delta) * s2
                total = (0.5 * eta * gamma * d.conj().T @ d
                         + 0.5 * (1 - eta) * gamma * d.conj().T @ d
                         + 0.5 * gamma * d_orth.conj().T @ d_orth)
                assert np.abs(total - total_expected).max() < 1e-12 * gamma

    def test_collection_weight_bounds(self):
        with pytest.raises(ParameterError):
            make_spec(eta=1.5)
        with pytest.raises(ParameterError):
            make_spec(eta=-0.1)


class TestTrajectoryStatistics:
    def test_undriven_crystal_emits_nothing(self):
        system = dicke.build_two_level_system(LaserParams(saturation=0.0), ATOM)
        times = run_trajectory(system, make_spec(duration=0.001))
        assert len(times) == 0

    def test_deterministic_given_seed(self, system2):
        spec = make_spec(delta=1.0, duration=0.002)
        t1 = run_trajectory(system2, spec)
        t2 = run_trajectory(system2, spec)
        assert np.array_equal(t1, t2)

    def test_seed_changes_stream(self, system2):
        t1 = run_trajectory(system2, make_spec(duration=0.002, seed=1))
        t2 = run_trajectory(system2, make_spec(duration=0.002, seed=2))
        assert not np.array_equal(t1, t2)

    def test_detected_rate_matches_steady_state(self, system2):
        for delta in (0.0, math.pi / 2, math.pi):
            spec = make_spec(delta=delta, duration=0.02, seed=5)
            times = run_trajectory(system2, spec)
            predicted = expected_detected_rate(system2, delta, 1.0)
            sigma = math.sqrt(predicted * spec.duration)
            assert abs(len(times) - predicted * spec.duration) < 3.5 * sigma

    def test_uncorrelated_direction_gives_flat_statistics(self, system2):
        spec = make_spec(delta=math.pi / 2, duration=0.03, seed=6)
        times = run_trajectory(system2, spec)
        value, err = stream_g2_zero(times, spec.duration)
        assert value == pytest.approx(1.0, abs=3.5 * err)

    def test_bunching_direction(self, system2):
        spec = make_spec(delta=math.pi, duration=0.03, seed=7)
        times = run_trajectory(system2, spec)
        value, err = stream_g2_zero(times, spec.duration)
        # 0.4 ns bins keep the curve bias below the statistical error
        assert value == pytest.approx(10.07, abs=max(3.5 * err, 0.4))
        assert value > 5.0

    def test_ensemble_average_independent_of_collection_weight(self, system2):
        # eta only thins the record; normalized statistics stay the same
        full = run_trajectory(system2, make_spec(delta=math.pi, duration=0.03,
                                                 seed=8, eta=1.0))
        half = run_trajectory(system2, make_spec(delta=math.pi, duration=0.06,
                                                 seed=9, eta=0.5))
        g_full, err_f = stream_g2_zero(full, 0.03)
        g_half, err_h = stream_g2_zero(half, 0.06)
        combined = math.hypot(err_f, err_h)
        assert abs(g_full - g_half) < 4 * combined


class TestPhaseAveragedTrajectory:
    def test_blocks_reproduce_fringe_average(self, system2):
        # slit + motional phase scrambling: singles rate matches the
        # quadrature-averaged steady-state intensity
        from ionhbt.campaign import averaged_intensity_rate
        config = default_config()
        from dataclasses import replace
        config = replace(config, simulation=replace(config.simulation,
                                                    collection_weight=1.0))
        spec = make_spec(delta=0.0, duration=0.01, seed=11, eta=1.0,
                         slit_width_phase=2 * math.pi / 1.94,
                         motional_visibility=0.5, phase_block=5e-6)
        times = run_trajectory(system2, spec)
        rate = averaged_intensity_rate(config, 0.0) / config.detectors.efficiency
        sigma = math.sqrt(rate * spec.duration)
        # phase blocks correlate counts within a block; allow extra slack
        assert abs(len(times) - rate * spec.duration) < 8 * sigma


class TestShelvingTrajectory:
    def test_shelving_reduces_duty_cycle(self):
        config = default_config()
        repump = repump_rate_for_dwell(config)
        sys3 = dicke.build_three_level_system(LASER, ATOM, repump_rate=repump)
        spec = make_spec(delta=math.pi / 2, duration=0.02, seed=12)
        times = run_trajectory(sys3, spec)
        sys2 = dicke.build_two_level_system(LASER, ATOM)
        bright = expected_detected_rate(sys2, math.pi / 2, 1.0)
        dwell = config.atom.metastable_dwell_fraction
        # detected transition carries only the ground-state branch of the decay
        expected = bright * (1 - dwell) * spec.duration \
            * (1 - config.atom.branching_to_metastable)
        assert abs(len(times) - expected) < 5 * math.sqrt(expected)

    def test_shelving_statistics_match_nine_level_engine(self):
        # stream zero-bin against the exact 9-level stationary correlation
        config = default_config()
        repump = repump_rate_for_dwell(config)
        sys3 = dicke.build_three_level_system(LASER, ATOM, repump_rate=repump)
        spec = make_spec(delta=math.pi, duration=0.05, seed=13)
        times = run_trajectory(sys3, spec)
        value, err = stream_g2_zero(times, spec.duration, bin_width=0.4e-9)
        table = dicke.two_time_table(sys3, [0.0])
        exact = dicke.g2_from_table(table, math.pi)[0]
        assert value == pytest.approx(exact, abs=max(4 * err, 0.1))


class TestCampaign:
    def test_campaign_reproducible_and_persisted(self, tmp_path):
        from dataclasses import replace
        config = default_config()
        config = replace(config,
                         simulation=replace(config.simulation, collection_weight=0.3),
                         detectors=replace(config.detectors, dark_rate=1000.0))
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        r1 = run_campaign(config, [0.0], 0.005, seed=21, out_dir=out1)
        r2 = run_campaign(config, [0.0], 0.005, seed=21, out_dir=out2)
        f1 = (out1 / "pos00_a.tags").read_bytes()
        f2 = (out2 / "pos00_a.tags").read_bytes()
        assert f1 == f2
        assert len(r1[0].stream_b) == len(r2[0].stream_b)

    def test_threaded_campaign_matches_serial(self):
        from dataclasses import replace
        config = default_config()
        config = replace(config,
                         simulation=replace(config.simulation, collection_weight=0.3))
        serial = run_campaign(config, [0.0, -0.97e-3], 0.003, seed=22, threads=1)
        threaded = run_campaign(config, [0.0, -0.97e-3], 0.003, seed=22, threads=2)
        for s, t in zip(serial, threaded):
            assert np.array_equal(s.stream_a.timestamps, t.stream_a.timestamps)

    def test_position_result_metadata(self):
        from dataclasses import replace
        config = default_config()
        config = replace(config,
                         simulation=replace(config.simulation, collection_weight=0.3))
        res = simulate_position(config, -0.97e-3, 0.002, seed=23)
        assert res.delta == pytest.approx(-math.pi, rel=1e-9)
        assert res.stream_a.metadata["config_hash"] == \
            res.stream_b.metadata["config_hash"]
        assert res.stream_a.metadata["slit_position_m"] == -0.97e-3
