"""End-to-end synthetic measurement runs: positions -> trajectories -> streams.

Every output is a pure function of (config, seed); per-position and
per-stage seeds are derived by hashing, so campaigns re-run bit-identically
and positions can be simulated concurrently.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import contrast, dicke
from .configfile import config_hash
from .detector import apply_detector
from .geometry import direction_for_slit, slit_phase_width
from .params import ExperimentConfig, ParameterError
from .streams import TimeTagStream, write_stream
from .trajectory import (
    TrajectoryRunSpec,
    _split_channels,
    expected_detected_rate,
    run_trajectory,
)


def derive_seed(master: int, *parts) -> int:
    """Stable 64-bit stream seed from the master seed and a label path."""
    text = ":".join([str(int(master))] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def repump_rate_for_dwell(config: ExperimentConfig) -> float:
    """Repump rate giving the configured per-ion shelved duty cycle."""
    if config.simulation.repump_rate is not None:
        return config.simulation.repump_rate
    p = config.atom.metastable_dwell_fraction
    if p <= 0:
        return 0.0
    laser = dicke.saturation_conversions(config.laser, config.atom)
    excited = (laser.saturation / 2) / (1 + laser.saturation)
    gamma_shelf = config.atom.linewidth * config.atom.branching_to_metastable
    return gamma_shelf * excited * (1 - p) / p


def build_system(config: ExperimentConfig, include_shelving: bool = False):
    """Two-level crystal by default; three-level when shelving is simulated."""
    if include_shelving and config.atom.branching_to_metastable > 0:
        return dicke.build_three_level_system(
            config.laser, config.atom, repump_rate_for_dwell(config))
    return dicke.build_two_level_system(config.laser, config.atom)


@dataclass
class PositionResult:
    """Streams and bookkeeping of one simulated slit position."""

    slit_position: float  # m
    delta: float  # rad
    stream_a: TimeTagStream
    stream_b: TimeTagStream
    emission_count: int
    duration: float
    files: list = field(default_factory=list)


def simulate_position(config: ExperimentConfig, slit_position: float,
                      duration: float, seed: int,
                      include_shelving: bool = False) -> PositionResult:
    direction = direction_for_slit(config, slit_position)
    system = build_system(config, include_shelving)
    spec = TrajectoryRunSpec(
        seed=derive_seed(seed, "trajectory", f"{slit_position:.12e}"),
        duration=duration,
        detection_direction=direction,
        collection_weight=config.simulation.collection_weight,
        detector=config.detectors,
        slit_width_phase=slit_phase_width(config.geometry),
        motional_visibility=config.motion.debye_waller_visibility,
        phase_block=config.simulation.phase_block,
    )
    events = run_trajectory(system, spec)
    stream_a, stream_b = apply_detector(
        events, config.detectors,
        derive_seed(seed, "detector", f"{slit_position:.12e}"), duration)
    meta = {
        "config_hash": config_hash(config),
        "seed": int(seed),
        "slit_position_m": slit_position,
        "delta_rad": direction.phase,
        "source": "ionhbt simulation",
    }
    stream_a.metadata.update(meta)
    stream_b.metadata.update(meta)
    return PositionResult(
        slit_position=slit_position, delta=direction.phase,
        stream_a=stream_a, stream_b=stream_b,
        emission_count=len(events), duration=duration,
    )


def run_campaign(config: ExperimentConfig, positions, per_position_duration: float,
                 seed: int, out_dir=None, threads: int = 1,
                 include_shelving: bool = False) -> list[PositionResult]:
    """Simulate a slit scan; optionally persist the streams position by position."""
    positions = [float(x) for x in positions]
    if not positions:
        raise ParameterError("campaign needs at least one slit position")
    if per_position_duration <= 0:
        raise ParameterError("per-position duration must be positive")

    def work(idx_pos):
        idx, pos = idx_pos
        return idx, simulate_position(config, pos, per_position_duration, seed,
                                      include_shelving)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results_by_idx = dict(pool.map(work, enumerate(positions)))
    else:
        results_by_idx = dict(map(work, enumerate(positions)))
    results = [results_by_idx[i] for i in range(len(positions))]

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for idx, res in enumerate(results):
            for label, stream in (("a", res.stream_a), ("b", res.stream_b)):
                path = out_dir / f"pos{idx:02d}_{label}.tags"
                write_stream(stream, path)
                res.files.append(str(path))
    return results


def averaged_intensity_rate(config: ExperimentConfig, delta_center: float,
                            system=None, _table_cache={}) -> float:
    """Collected singles rate (both APDs summed, after efficiency), Hz.

    Averages the fringe over the slit width and the motional phase spread,
    matching what the trajectory's slow phase blocks produce.
    """
    if system is None:
        system = build_system(config)
    key = id(system)
    if key not in _table_cache:
        _table_cache.clear()
        _table_cache[key] = (dicke.two_time_table(system, [0.0]),
                             _split_channels(system)[1])
    table, gamma_ground = _table_cache[key]
    budget = contrast.ContrastBudget(
        visibility=config.motion.debye_waller_visibility,
        slit_width_phase=slit_phase_width(config.geometry),
        jitter_sigma=config.detectors.timing_jitter_sigma,
        dark_rate=config.detectors.dark_rate,
        single_ion_fraction=0.0,
    )
    nodes, weights = contrast._phase_nodes(budget, delta_center, 32, 48)
    share = 0.5 if system.ion_count == 2 else 1.0
    mode = sum(w * dicke.intensity_at(table, d) for d, w in zip(nodes, weights))
    rate = share * config.simulation.collection_weight * gamma_ground * mode
    return config.detectors.efficiency * rate


def simulate_fringe_scan(config: ExperimentConfig, positions,
                         integration_time: float, seed: int):
    """Summed-APD intensity scan used for the fringe calibration.

    Counts are Poissonian over the integration time at each position; the
    returned rates feed the sinusoidal fit.
    """
    positions = np.asarray(positions, dtype=float)
    if integration_time <= 0:
        raise ParameterError("integration time must be positive")
    system = build_system(config)
    rng = np.random.Generator(np.random.Philox(
        key=derive_seed(seed, "fringe") & (2 ** 64 - 1)))
    rates = np.empty(len(positions))
    for i, pos in enumerate(positions):
        direction = direction_for_slit(config, pos)
        mean_rate = averaged_intensity_rate(config, direction.phase, system)
        mean_rate += 2 * config.detectors.dark_rate
        counts = rng.poisson(mean_rate * integration_time)
        rates[i] = counts / integration_time
    return positions, rates
