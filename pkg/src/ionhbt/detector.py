"""Imperfect HBT detection: beam splitter, two APDs, darks, jitter, dead time.

Emission times from the trajectory engine pass through, in order: 50:50
routing, efficiency thinning, Gaussian timing jitter, per-channel dead-time
pruning, dark-count injection.  Output is a pair of time-tag streams on the
1 ps integer grid.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .params import DetectorParams
from .streams import PS_PER_S, TimeTagStream, seconds_to_ps


@njit(cache=True)
def _dead_time_mask(times, dead):
    keep = np.ones(times.shape[0], dtype=np.bool_)
    last = -1e30
    for i in range(times.shape[0]):
        if times[i] - last < dead:
            keep[i] = False
        else:
            last = times[i]
    return keep


def _strictly_increasing_ps(tags: np.ndarray) -> np.ndarray:
    """Resolve 1 ps collisions by bumping; keeps the stream sorted."""
    if len(tags) < 2:
        return tags
    tags = np.maximum.accumulate(tags)  # guard against rounding inversions
    while True:
        dup = np.flatnonzero(np.diff(tags) == 0)
        if not len(dup):
            return tags
        tags[dup + 1] += 1
        tags = np.maximum.accumulate(tags)


def apply_detector(events, detector: DetectorParams, seed: int,
                   duration: float) -> tuple[TimeTagStream, TimeTagStream]:
    """Route emission times through the beam-splitter + APD pair model."""
    events = np.asarray(events, dtype=float)
    rng = np.random.Generator(np.random.Philox(key=seed & (2 ** 64 - 1)))
    n = len(events)
    to_b = rng.random(n) < 0.5
    kept = rng.random(n) < detector.efficiency
    jitter = (rng.normal(0.0, detector.timing_jitter_sigma, n)
              if detector.timing_jitter_sigma > 0 else np.zeros(n))
    streams = []
    for channel in (0, 1):
        mask = kept & (to_b == bool(channel))
        times = events[mask] + jitter[mask]
        times = times[(times >= 0.0) & (times < duration)]
        times.sort()
        if detector.dead_time > 0 and len(times):
            times = times[_dead_time_mask(times, detector.dead_time)]
        n_dark = rng.poisson(detector.dark_rate * duration)
        if n_dark:
            dark = rng.random(n_dark) * duration
            times = np.sort(np.concatenate([times, dark]))
        tags = _strictly_increasing_ps(seconds_to_ps(times))
        if len(tags) and int(tags[-1]) >= duration * PS_PER_S:
            tags = tags[tags < np.uint64(int(duration * PS_PER_S))]
        streams.append(TimeTagStream(channel_id=channel, timestamps=tags,
                                     duration=duration,
                                     metadata={"seed": int(seed)}))
    return streams[0], streams[1]
