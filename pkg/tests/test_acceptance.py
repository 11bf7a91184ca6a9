"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the PASS lines.
Statistical criteria use frozen seeds; every expected number is either an
exact structural value, a published reference, or derived from an
independent closed form noted next to the assertion.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from ionhbt import contrast, correlator, dicke
from ionhbt.campaign import derive_seed, run_campaign
from ionhbt.geometry import DetectionDirection, ion_separation
from ionhbt.params import (
    AtomParams,
    DetectorParams,
    IonCrystalParams,
    LaserParams,
    default_config,
)
from ionhbt.streams import seconds_to_ps
from ionhbt.trajectory import TrajectoryRunSpec, expected_detected_rate, \
    run_trajectory

TWO_PI = 2 * math.pi
LASER = LaserParams()
ATOM = AtomParams()


def report(criterion: int, label: str, detail: str):
    print(f"\nACCEPTANCE {criterion:2d} [{label}]: PASS  ({detail})")


@pytest.fixture(scope="module")
def system2():
    return dicke.build_two_level_system(LASER, ATOM)


def autocorr_zero(times, duration, bin_width, window=100e-9):
    tags = np.unique(seconds_to_ps(times))
    hist = correlator.correlate(tags, tags, bin_width, window)
    return correlator.g2_zero_estimate(correlator.normalize(hist))


def test_criterion_01_engine_matches_closed_form(system2):
    start = time.perf_counter()
    deltas = np.linspace(0, TWO_PI, 17, endpoint=False)
    worst = 0.0
    for s in (0.1, 0.46, 1.0, 2.0, 5.0):
        laser = LaserParams(saturation=s)
        table = dicke.two_time_table(dicke.build_two_level_system(laser, ATOM),
                                     [0.0])
        for delta in deltas:
            diff = abs(dicke.g2_from_table(table, delta)[0]
                       - dicke.g2_zero_analytic(s, delta))
            worst = max(worst, diff)
    elapsed = time.perf_counter() - start
    assert worst < 1e-6
    assert elapsed < 10.0
    report(1, "closed-form equivalence",
           f"max |engine - formula| = {worst:.2e} over 85 points in {elapsed:.2f} s")


def test_criterion_02_motion_limited_extremes():
    bunching = contrast.g2_visibility(0.46, math.pi, 0.50)
    antibunching = contrast.g2_visibility(0.46, 0.0, 0.50)
    assert bunching == pytest.approx(2.31, abs=0.01)
    assert antibunching == pytest.approx(0.555, abs=0.01)
    report(2, "visibility-limited extremes",
           f"max = {bunching:.4f} (2.31), min = {antibunching:.4f} (0.555)")


def test_criterion_03_degraded_extremes():
    start = time.perf_counter()
    config = default_config()
    budget = contrast.budget_from_config(config)
    curve = contrast.compose_prediction(config, budget, [-0.97e-3, 0.0],
                                        uncertainties={})
    bunching, antibunching = curve.g2_values
    elapsed = time.perf_counter() - start
    assert 1.29 <= bunching <= 1.53
    assert 0.66 <= antibunching <= 0.70
    assert elapsed < 120.0
    report(3, "full-budget extremes",
           f"max = {bunching:.4f} in [1.29, 1.53], "
           f"min = {antibunching:.4f} in [0.66, 0.70], {elapsed:.1f} s")


def test_criterion_04_measured_value_consistency():
    # Campaigns at the three published slit positions with the paper budget.
    # The collected solid angle is scaled up (collection_weight) to gather
    # >= 1e6 detected photons on a desk; the dark rate is scaled by the same
    # factor so the dark-to-signal ratio of the experiment is preserved.
    start = time.perf_counter()
    config = default_config()
    scale_weight = 0.025
    flat_rate_per_det = 0.5 * 0.85 * expected_detected_rate(
        dicke.build_two_level_system(LASER, ATOM), math.pi / 2, scale_weight)
    dark_scaled = 10.0 * flat_rate_per_det / 2000.0
    config = replace(
        config,
        simulation=replace(config.simulation, collection_weight=scale_weight),
        detectors=replace(config.detectors, dark_rate=dark_scaled, dead_time=0.0),
    )
    positions = [0.0, 0.45e-3, -0.97e-3]
    published = {0.0: (0.60, 0.05), 0.45e-3: (0.89, 0.07), -0.97e-3: (1.46, 0.08)}
    results = run_campaign(config, positions, per_position_duration=0.7,
                           seed=20260811, threads=3)
    total_detected = sum(len(r.stream_a) + len(r.stream_b) for r in results)
    rows = []
    for res in results:
        hist = correlator.correlate(res.stream_a, res.stream_b,
                                    config.detectors.bin_width,
                                    config.detectors.correlation_window)
        value, stat_err = correlator.g2_zero_estimate(correlator.normalize(hist))
        ref, ref_err = published[res.slit_position]
        rows.append((res.slit_position, value, stat_err, ref,
                     math.hypot(ref_err, stat_err)))
    elapsed = time.perf_counter() - start
    details = "; ".join(f"x={pos * 1e3:+.2f}mm: {val:.3f}+-{err:.3f} vs {ref}"
                        for pos, val, err, ref, _ in rows)
    print(f"\n  criterion 4 detail: {details}; {total_detected} photons "
          f"in {elapsed:.0f} s")
    assert total_detected >= 1_000_000
    for pos, value, stat_err, ref, combined in rows:
        assert abs(value - ref) <= 3 * combined, (pos, value, stat_err, ref)
    assert elapsed < 600.0
    report(4, "measured-value consistency", details)


def test_criterion_05_heralded_projection(system2):
    rho = dicke.steady_state(system2)
    anti = dicke.one_excitation_component(
        dicke.heralded_state(rho, dicke.detection_operator(system2, math.pi)),
        system2)
    sym = dicke.one_excitation_component(
        dicke.heralded_state(rho, dicke.detection_operator(system2, 0.0)),
        system2)
    anti_overlap = anti[1, 1].real
    sym_overlap = sym[0, 0].real
    assert abs(anti_overlap - 1.0) < 1e-12
    assert abs(sym_overlap - 1.0) < 1e-12
    report(5, "heralded projection",
           f"|<a|rho1|a>-1| = {abs(anti_overlap - 1):.1e}, "
           f"|<s|rho1|s>-1| = {abs(sym_overlap - 1):.1e}")


def test_criterion_06_trajectories_match_master_equation(system2):
    cases = [
        (0.0, 0.352, 0.015),
        (math.pi / 2, 1.0, 0.02),
        (math.pi, 10.07, 0.06),
    ]
    details = []
    for delta, reference, duration in cases:
        spec = TrajectoryRunSpec(
            seed=derive_seed(321, "mc", f"{delta:.4f}"), duration=duration,
            detection_direction=DetectionDirection(phase=delta),
            collection_weight=1.0)
        times = run_trajectory(system2, spec)
        # 0.05 ns bins keep the finite-bin curvature bias below the noise
        value, err = autocorr_zero(times, duration, bin_width=0.05e-9)
        assert abs(value - reference) <= 3 * err, (delta, value, err)
        predicted = expected_detected_rate(system2, delta, 1.0) * duration
        assert abs(len(times) - predicted) <= 3 * math.sqrt(predicted)
        details.append(f"d={delta:.2f}: {value:.3f}+-{err:.3f} vs {reference}")
    report(6, "trajectory vs master equation", "; ".join(details))


def test_criterion_07_correlator_oracle():
    rng = np.random.default_rng(777)
    checked = 0
    for _ in range(100):
        n = int(10 ** rng.uniform(1, 4))
        span = int(10 ** rng.uniform(6, 9))
        a = np.unique(rng.integers(0, span, size=n)).astype(np.int64)
        b = np.unique(rng.integers(0, span, size=n)).astype(np.int64)
        bin_width = rng.choice([0.5e-9, 2e-9, 8e-9])
        window = rng.choice([50e-9, 600e-9, 2e-6])
        fast = correlator.correlate(a, b, bin_width, window)
        slow = correlator.correlate_bruteforce(a, b, bin_width, window)
        assert np.array_equal(fast.bins, slow.bins)
        checked += 1
    # sharding invariance and channel-swap symmetry suites; exact zero-delay
    # cross coincidences are their own mirror image and excluded by
    # construction (they occur with probability ~1e-6 per tag in real data)
    for seed in range(10):
        r = np.random.default_rng(seed)
        a = np.unique(r.integers(0, 10 ** 8, size=3000)).astype(np.int64)
        b = np.unique(r.integers(0, 10 ** 8, size=3000)).astype(np.int64)
        b = b[~np.isin(b, a)]
        reference = correlator.correlate(a, b, 2e-9, 600e-9)
        sharded = correlator.correlate_sharded(a, b, 2e-9, 600e-9, 7)
        swapped = correlator.correlate(b, a, 2e-9, 600e-9)
        assert np.array_equal(reference.bins, sharded.bins)
        assert np.array_equal(reference.bins, swapped.bins[::-1])
    report(7, "correlator oracle",
           f"{checked} randomized instances bit-identical; sharding and "
           "channel-swap suites exact")


def test_criterion_08_normalization_fixed_point():
    from ionhbt.streams import PS_PER_S, TimeTagStream

    def poisson_stream(rate, duration, rng, channel):
        tags = np.unique(rng.integers(0, int(duration * PS_PER_S),
                                      size=rng.poisson(rate * duration)))
        return TimeTagStream(channel, tags.astype(np.uint64), duration)

    rng = np.random.default_rng(4242)
    duration = 80.0
    a = poisson_stream(50e3, duration, rng, 0)
    b = poisson_stream(50e3, duration, rng, 1)
    norm = correlator.normalize(correlator.correlate(a, b, 2e-9, 600e-9))
    pulls = (norm.g2 - 1.0) / norm.g2_err
    assert np.abs(pulls).max() < 4.0

    a4 = poisson_stream(50e3, 4 * duration, rng, 0)
    b4 = poisson_stream(50e3, 4 * duration, rng, 1)
    norm4 = correlator.normalize(correlator.correlate(a4, b4, 2e-9, 600e-9))
    ratio = norm4.g2_err.mean() / norm.g2_err.mean()
    assert ratio == pytest.approx(0.5, rel=0.15)
    report(8, "normalization fixed point",
           f"max |pull| = {np.abs(pulls).max():.2f} < 4; quadrupled duration "
           f"halves the per-bin error (ratio {ratio:.3f})")


def test_criterion_09_geometry_and_distance_flip():
    d760 = ion_separation(IonCrystalParams())
    d718 = ion_separation(IonCrystalParams(axial_trap_frequency=TWO_PI * 718e3))
    assert d760 == pytest.approx(6.70e-6, rel=0.01)
    assert d718 == pytest.approx(6.97e-6, rel=0.01)

    # end-to-end: same slit position, re-tuned axial confinement flips the
    # sign of g2(0) - 1
    config = default_config()
    config = replace(
        config,
        geometry=replace(config.geometry, reference_separation=d760),
        simulation=replace(config.simulation, collection_weight=0.2),
        detectors=replace(config.detectors, dead_time=0.0),
    )
    values = {}
    for label, omega in (("bunching", TWO_PI * 760e3), ("antibunching",
                                                        TWO_PI * 718e3)):
        tuned = config.with_axial_frequency(omega)
        tuned = replace(tuned, geometry=config.geometry)
        res = run_campaign(tuned, [-0.97e-3], per_position_duration=0.12,
                           seed=888)[0]
        hist = correlator.correlate(res.stream_a, res.stream_b,
                                    config.detectors.bin_width,
                                    config.detectors.correlation_window)
        values[label] = correlator.g2_zero_estimate(correlator.normalize(hist))
    bunch, bunch_err = values["bunching"]
    anti, anti_err = values["antibunching"]
    assert bunch - 1.0 > 3 * bunch_err
    assert 1.0 - anti > 3 * anti_err
    report(9, "geometry + distance flip",
           f"d(760 kHz) = {d760 * 1e6:.3f} um, d(718 kHz) = {d718 * 1e6:.3f} um; "
           f"g2(0): {bunch:.3f} -> {anti:.3f} across the re-tuning")


def test_criterion_10_temporal_shape(system2):
    # analytic-mode two-level curve after jitter averaging decays to 1
    # (point detection phase: the slow collected-phase scrambling adds a
    # long-lived intensity pedestal by construction and is not part of
    # this shape check)
    config = default_config()
    budget = contrast.budget_from_config(config)
    cache = contrast._CurveCache(config)
    table2, _ = cache.tables(0.46)
    curve = dicke.g2_from_table(table2, 0.0)
    taus_full = np.concatenate([-cache.taus[:0:-1], cache.taus])
    curve_full = np.concatenate([curve[:0:-1], curve])
    smeared = contrast.jitter_average(taus_full, curve_full, budget.jitter_sigma)
    at_300ns = smeared[np.argmin(np.abs(taus_full - 300e-9))]
    assert abs(at_300ns - 1.0) < 0.02

    single = dicke.build_two_level_system(LASER, ATOM, ion_count=1)
    ideal_zero = dicke.g2_from_table(dicke.two_time_table(single, [0.0]), 0.0)[0]
    assert ideal_zero == pytest.approx(0.0, abs=1e-14)

    with_darks = contrast.dark_count_mix(0.0, 2000.0, 10.0)
    assert with_darks > 0.0
    report(10, "temporal shape",
           f"|g2(300 ns) - 1| = {abs(at_300ns - 1):.4f} < 0.02; single-ion "
           f"g2(0) = {ideal_zero:.1e}; with darks {with_darks:.4f} > 0")
