"""Streaming multi-start multi-stop correlator and its normalization.

Every ordered pair of tags (t_a, t_b) with |t_b - t_a| <= window increments
the bin holding tau = t_b - t_a.  All arithmetic stays on the picosecond
integer grid, so results are exactly reproducible and the brute-force
oracle must agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .streams import PS_PER_S, TimeTagStream

_CHUNK = 65536  # a-tags per vectorized block


def _bin_indices(taus: np.ndarray, bin_ps: int, m: int) -> np.ndarray:
    """Signed-tau bin index with mirror-symmetric edges.

    Nonnegative delays fill [k b, (k+1) b); negative delays fill the exact
    mirrors (-(k+1) b, -k b], so reflecting a histogram equals swapping the
    input channels bit for bit, bin edges included.
    """
    idx = np.where(taus >= 0,
                   taus // bin_ps + m,
                   m - 1 - (-taus) // bin_ps)
    return np.clip(idx, 0, 2 * m - 1)


class CorrelatorError(ValueError):
    """Invalid input to the correlator (unsorted tags, bad bin/window)."""


@dataclass
class CorrelationHistogram:
    """Signed-tau coincidence histogram plus normalization bookkeeping."""

    bin_width: float  # s
    window: float  # s
    bins: np.ndarray  # int64 counts, length 2*ceil(window/bin)
    singles_a: int
    singles_b: int
    duration: float  # s

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.int64)
        m = n_half_bins(self.bin_width, self.window)
        if len(self.bins) != 2 * m:
            raise CorrelatorError(
                f"histogram needs {2 * m} bins, got {len(self.bins)}")
        if (self.bins < 0).any():
            raise CorrelatorError("negative bin count")
        if self.duration <= 0:
            raise CorrelatorError("duration must be positive")

    @property
    def tau_centers(self) -> np.ndarray:
        """Bin centers in seconds."""
        m = len(self.bins) // 2
        return (np.arange(len(self.bins)) - m + 0.5) * self.bin_width

    def merge(self, other: "CorrelationHistogram") -> "CorrelationHistogram":
        """Associative merge of shard results (singles/duration from self)."""
        if len(other.bins) != len(self.bins):
            raise CorrelatorError("cannot merge histograms of different shape")
        return CorrelationHistogram(
            bin_width=self.bin_width, window=self.window,
            bins=self.bins + other.bins,
            singles_a=self.singles_a + other.singles_a,
            singles_b=self.singles_b + other.singles_b,
            duration=self.duration,
        )


def n_half_bins(bin_width: float, window: float) -> int:
    if bin_width <= 0:
        raise CorrelatorError("bin width must be positive")
    if window < bin_width:
        raise CorrelatorError("window must be at least one bin wide")
    return int(math.ceil(round(window / bin_width, 9)))


def _as_ps(stream) -> np.ndarray:
    tags = stream.timestamps if isinstance(stream, TimeTagStream) else np.asarray(stream)
    tags = tags.astype(np.int64)
    if len(tags) > 1 and (np.diff(tags) <= 0).any():
        raise CorrelatorError("tags must be strictly increasing (refusing to sort)")
    return tags


def _accumulate_pairs(tags_a: np.ndarray, tags_b: np.ndarray, bin_ps: int,
                      window_ps: int, counts: np.ndarray, same_stream: bool) -> None:
    m = len(counts) // 2
    lo = np.searchsorted(tags_b, tags_a - window_ps, side="left")
    hi = np.searchsorted(tags_b, tags_a + window_ps, side="right")
    for start in range(0, len(tags_a), _CHUNK):
        stop = min(start + _CHUNK, len(tags_a))
        npairs = hi[start:stop] - lo[start:stop]
        total = int(npairs.sum())
        if not total:
            continue
        # flatten (a-index, partner offset) into one index array into tags_b
        rep_a = np.repeat(tags_a[start:stop], npairs)
        offsets = np.arange(total) - np.repeat(
            np.cumsum(npairs) - npairs, npairs)
        partners = tags_b[np.repeat(lo[start:stop], npairs) + offsets]
        taus = partners - rep_a
        np.add.at(counts, _bin_indices(taus, bin_ps, m), 1)
    if same_stream:
        counts[m] -= len(tags_a)  # remove zero-delay self pairs


def correlate(a, b, bin_width: float, window: float) -> CorrelationHistogram:
    """Exact pair counting between two sorted tag streams.

    Same-object (or identical) inputs are treated as an autocorrelation and
    zero-delay self pairs are excluded.  A cross-channel pair at exactly
    tau = 0 (one chance in ~1e6 per tag at these rates) lands in the
    [0, bin) bin by convention; every other delay mirrors exactly under a
    channel swap.
    """
    tags_a = _as_ps(a)
    tags_b = _as_ps(b)
    m = n_half_bins(bin_width, window)
    bin_ps = int(round(bin_width * PS_PER_S))
    window_ps = int(round(window * PS_PER_S))
    if bin_ps < 1:
        raise CorrelatorError("bin width below the 1 ps tag resolution")
    same = a is b or (len(tags_a) == len(tags_b) and np.array_equal(tags_a, tags_b))
    counts = np.zeros(2 * m, dtype=np.int64)
    _accumulate_pairs(tags_a, tags_b, bin_ps, window_ps, counts, same)
    dur_a = a.duration if isinstance(a, TimeTagStream) else (tags_a[-1] + 1) / PS_PER_S
    dur_b = b.duration if isinstance(b, TimeTagStream) else (tags_b[-1] + 1) / PS_PER_S
    return CorrelationHistogram(
        bin_width=bin_ps / PS_PER_S, window=window_ps / PS_PER_S, bins=counts,
        singles_a=len(tags_a), singles_b=len(tags_b),
        duration=float(min(dur_a, dur_b)),
    )


def correlate_sharded(a, b, bin_width: float, window: float,
                      n_shards: int) -> CorrelationHistogram:
    """Shard the first stream by time segment and merge; result is exact.

    Pairs are attributed to their a-tag, so splitting a leaves every pair
    counted exactly once while b is consulted in full per shard.
    """
    if n_shards < 1:
        raise CorrelatorError("need at least one shard")
    tags_a = _as_ps(a)
    tags_b = _as_ps(b)
    m = n_half_bins(bin_width, window)
    bin_ps = int(round(bin_width * PS_PER_S))
    window_ps = int(round(window * PS_PER_S))
    same = a is b or (len(tags_a) == len(tags_b) and np.array_equal(tags_a, tags_b))
    counts = np.zeros(2 * m, dtype=np.int64)
    bounds = np.linspace(0, len(tags_a), n_shards + 1).astype(int)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi > lo:
            _accumulate_pairs(tags_a[lo:hi], tags_b, bin_ps, window_ps, counts,
                              same_stream=False)
    if same:
        counts[m] -= len(tags_a)
    dur_a = a.duration if isinstance(a, TimeTagStream) else (tags_a[-1] + 1) / PS_PER_S
    dur_b = b.duration if isinstance(b, TimeTagStream) else (tags_b[-1] + 1) / PS_PER_S
    return CorrelationHistogram(
        bin_width=bin_ps / PS_PER_S, window=window_ps / PS_PER_S, bins=counts,
        singles_a=len(tags_a), singles_b=len(tags_b),
        duration=float(min(dur_a, dur_b)),
    )


def correlate_bruteforce(a, b, bin_width: float, window: float) -> CorrelationHistogram:
    """O(n^2) reference: all pair differences, no sliding window.

    Deliberately written without the streaming machinery so the two paths
    are independent checks of each other.
    """
    tags_a = _as_ps(a)
    tags_b = _as_ps(b)
    m = n_half_bins(bin_width, window)
    bin_ps = int(round(bin_width * PS_PER_S))
    window_ps = int(round(window * PS_PER_S))
    same = a is b or (len(tags_a) == len(tags_b) and np.array_equal(tags_a, tags_b))
    counts = np.zeros(2 * m, dtype=np.int64)
    block = max(1, int(2e7 // max(len(tags_b), 1)))
    for start in range(0, len(tags_a), block):
        chunk = tags_a[start:start + block]
        taus = tags_b[None, :] - chunk[:, None]
        keep = np.abs(taus) <= window_ps
        idx = _bin_indices(taus[keep], bin_ps, m)
        counts += np.bincount(idx, minlength=2 * m).astype(np.int64)
    if same:
        counts[m] -= len(tags_a)
    dur_a = a.duration if isinstance(a, TimeTagStream) else (tags_a[-1] + 1) / PS_PER_S
    dur_b = b.duration if isinstance(b, TimeTagStream) else (tags_b[-1] + 1) / PS_PER_S
    return CorrelationHistogram(
        bin_width=bin_ps / PS_PER_S, window=window_ps / PS_PER_S, bins=counts,
        singles_a=len(tags_a), singles_b=len(tags_b),
        duration=float(min(dur_a, dur_b)),
    )


def correlate_startstop(a, b, bin_width: float, window: float) -> CorrelationHistogram:
    """Classic start-stop variant: each a-tag pairs only with the next b-tag.

    Biased at high rates; provided for comparison with the multi-start
    default, not used in any calibration.
    """
    tags_a = _as_ps(a)
    tags_b = _as_ps(b)
    m = n_half_bins(bin_width, window)
    bin_ps = int(round(bin_width * PS_PER_S))
    window_ps = int(round(window * PS_PER_S))
    counts = np.zeros(2 * m, dtype=np.int64)
    nxt = np.searchsorted(tags_b, tags_a, side="right")
    valid = nxt < len(tags_b)
    taus = tags_b[nxt[valid]] - tags_a[valid]
    keep = taus <= window_ps
    np.add.at(counts, _bin_indices(taus[keep], bin_ps, m), 1)
    dur_a = a.duration if isinstance(a, TimeTagStream) else (tags_a[-1] + 1) / PS_PER_S
    dur_b = b.duration if isinstance(b, TimeTagStream) else (tags_b[-1] + 1) / PS_PER_S
    return CorrelationHistogram(
        bin_width=bin_ps / PS_PER_S, window=window_ps / PS_PER_S, bins=counts,
        singles_a=len(tags_a), singles_b=len(tags_b),
        duration=float(min(dur_a, dur_b)),
    )


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormalizedCorrelation:
    """g2(tau) estimate with per-bin counting errors."""

    tau: np.ndarray  # s, bin centers
    g2: np.ndarray
    g2_err: np.ndarray
    histogram: CorrelationHistogram = field(repr=False)


def normalize(hist: CorrelationHistogram) -> NormalizedCorrelation:
    """g2 estimate: counts scaled by T / (S_a S_b dtau).

    Uncorrelated Poissonian streams give expectation 1 in every bin; the
    per-bin error is sqrt(N) under the same scaling.
    """
    if hist.singles_a <= 0 or hist.singles_b <= 0:
        raise CorrelatorError("cannot normalize with zero singles")
    scale = hist.duration / (hist.singles_a * hist.singles_b * hist.bin_width)
    counts = hist.bins.astype(float)
    return NormalizedCorrelation(
        tau=hist.tau_centers,
        g2=counts * scale,
        g2_err=np.sqrt(counts) * scale,
        histogram=hist,
    )


def g2_zero_estimate(norm: NormalizedCorrelation,
                     zero_bin_count: int = 1) -> tuple[float, float]:
    """Average of the 2*zero_bin_count bins straddling tau = 0.

    The default uses the single bin width around zero (one bin on each
    side, since bin edges sit at tau = 0); counting errors combine as
    sqrt of the summed counts.
    """
    if zero_bin_count < 1:
        raise CorrelatorError("zero_bin_count must be at least 1")
    hist = norm.histogram
    m = len(hist.bins) // 2
    if zero_bin_count > m:
        raise CorrelatorError("zero_bin_count exceeds histogram half width")
    sel = slice(m - zero_bin_count, m + zero_bin_count)
    scale = hist.duration / (hist.singles_a * hist.singles_b * hist.bin_width)
    total = int(hist.bins[sel].sum())
    nbins = 2 * zero_bin_count
    return total * scale / nbins, math.sqrt(total) * scale / nbins


def histogram_to_csv(norm: NormalizedCorrelation, path) -> None:
    rows = np.column_stack([
        norm.tau * 1e9, norm.histogram.bins, norm.g2, norm.g2_err,
    ])
    np.savetxt(path, rows, delimiter=",",
               header="tau_ns,counts,g2,g2_err", comments="", fmt="%.9g")
