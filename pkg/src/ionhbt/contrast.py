"""Contrast-limiting effects layered onto the ideal fringe prediction.

The measured pair-correlation extremes fall well short of the immobile
two-emitter values.  Degradations are applied in a fixed order: residual
motion (fringe visibility), finite slit width, single-ion episodes from
shelving, detector timing jitter plus the finite histogram bin, and dark
counts.  g2 is a ratio, so averages act on the pair numerator and the
intensity denominator separately, never on point values of the ratio.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import dicke
from .dicke import TwoTimeTable
from .geometry import slit_phase_width, slit_to_phase, separation_phase_shift
from .params import ExperimentConfig, ParameterError


class QuadratureError(RuntimeError):
    """Slit-average quadrature failed to converge under refinement."""


# 1-sigma uncertainties of the independently measured budget inputs,
# used for the linearized confidence band
BUDGET_UNCERTAINTIES = {
    "saturation": 0.08,
    "visibility": 0.05,
    "fringe_period": 0.04e-3,  # m
}


@dataclass(frozen=True)
class ContrastBudget:
    """Everything that eats fringe contrast, in model units."""

    visibility: float = 0.50  # residual-motion fringe visibility
    slit_width_phase: float = 2 * math.pi * (1.0 / 1.94)  # rad across the slit
    jitter_sigma: float = 1.6e-9 / 2.3548200450309493  # s per detector
    dark_rate: float = 10.0  # Hz per detector
    signal_rate_per_detector: float = 2000.0  # Hz
    single_ion_fraction: float = 0.55  # share of emitting time with one ion dark

    def __post_init__(self):
        if not 0 <= self.visibility <= 1:
            raise ParameterError("visibility must lie in [0, 1]")
        if not 0 <= self.single_ion_fraction < 1:
            raise ParameterError("single-ion fraction must lie in [0, 1)")
        for name in ("slit_width_phase", "jitter_sigma", "dark_rate",
                     "signal_rate_per_detector"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")


def single_ion_fraction_from_dwell(dwell: float) -> float:
    """Share of emitting time with exactly one ion bright.

    Ions shelve independently with duty cycle `dwell`; episodes with both
    ions shelved emit nothing and drop out of the conditioning.
    """
    if not 0 <= dwell < 1:
        raise ParameterError("dwell fraction must lie in [0, 1)")
    return 2 * dwell / (1 + dwell)


def budget_from_config(config: ExperimentConfig) -> ContrastBudget:
    return ContrastBudget(
        visibility=config.motion.debye_waller_visibility,
        slit_width_phase=slit_phase_width(config.geometry),
        jitter_sigma=config.detectors.timing_jitter_sigma,
        dark_rate=config.detectors.dark_rate,
        signal_rate_per_detector=ContrastBudget.signal_rate_per_detector,
        single_ion_fraction=single_ion_fraction_from_dwell(
            config.atom.metastable_dwell_fraction),
    )


# ---------------------------------------------------------------------------
# individual layers


def g2_visibility(s: float, delta: float, v: float) -> float:
    """Zero-delay pair correlation with a washed-out fringe.

    Thermal motion multiplies the cross-ion coherence by v, leaving the
    pair numerator untouched; v = 1 recovers the immobile result.
    """
    if s < 0:
        raise ParameterError("saturation must be nonnegative")
    if not 0 <= v <= 1:
        raise ParameterError("visibility must lie in [0, 1]")
    denom = 1.0 + s + v * math.cos(delta)
    if denom == 0.0:
        raise dicke.DivergenceError("pair correlation diverges (s = 0, v = 1, delta = pi)")
    return (1.0 + s) ** 2 / denom ** 2


def _phase_nodes(budget: ContrastBudget, center_delta: float, n_slit: int,
                 n_motion: int):
    """Quadrature nodes and weights for the collected-phase distribution.

    The slit admits a uniform phase range of width w; residual motion adds
    a Gaussian phase with exp(-sigma^2/2) = visibility.  Both shifts are
    common to the two detection events of a coincidence (the two detectors
    look through the same collection optics).
    """
    if budget.slit_width_phase > 0:
        x, wx = np.polynomial.legendre.leggauss(n_slit)
        slit = center_delta + 0.5 * budget.slit_width_phase * x
        w_slit = wx / wx.sum()
    else:
        slit = np.array([center_delta])
        w_slit = np.array([1.0])
    if budget.visibility < 1.0:
        sigma = math.sqrt(-2.0 * math.log(budget.visibility)) if budget.visibility > 0 else None
        if sigma is None:
            # visibility 0: fringe fully scrambled, uniform phase
            xm = np.linspace(-math.pi, math.pi, n_motion, endpoint=False)
            w_m = np.full(n_motion, 1.0 / n_motion)
        else:
            xm, wm = np.polynomial.hermite_e.hermegauss(n_motion)
            xm = xm * sigma
            w_m = wm / wm.sum()
    else:
        xm = np.array([0.0])
        w_m = np.array([1.0])
    nodes = (slit[:, None] + xm[None, :]).ravel()
    weights = (w_slit[:, None] * w_m[None, :]).ravel()
    return nodes, weights


def _averaged_numerator_denominator(table: TwoTimeTable, budget: ContrastBudget,
                                    center_delta: float, pair_positions: str):
    """<G2(tau)> and <G1> under one refinement level of the phase average."""
    last = None
    for n_slit, n_motion in ((8, 12), (16, 24), (32, 48), (64, 96)):
        nodes, weights = _phase_nodes(budget, center_delta, n_slit, n_motion)
        denom = np.array([dicke.intensity_at(table, d) for d in nodes]) @ weights
        if pair_positions == "correlated":
            num = np.zeros_like(table.taus)
            for d, w in zip(nodes, weights):
                num = num + w * dicke.pair_numerator(table, d, d)
        elif pair_positions == "independent":
            num = np.zeros_like(table.taus)
            for d1, w1 in zip(nodes, weights):
                for d2, w2 in zip(nodes, weights):
                    num = num + w1 * w2 * dicke.pair_numerator(table, d1, d2)
        else:
            raise ParameterError(f"unknown pair_positions mode {pair_positions!r}")
        value = (num, denom)
        if last is not None:
            scale = max(abs(last[1]), 1e-300)
            change = max(np.abs(num - last[0]).max() / max(np.abs(num).max(), 1e-300),
                         abs(denom - last[1]) / scale)
            if change < 1e-4:
                return value
        last = value
    raise QuadratureError(
        f"slit average did not converge at delta = {center_delta:.4g} "
        f"(last relative change {change:.2e})")


def slit_average(table: TwoTimeTable, budget: ContrastBudget, center_delta: float,
                 pair_positions: str = "correlated") -> float:
    """Zero-delay g2 averaged over the collected phase range.

    "correlated" treats the two detection events of a pair as sharing the
    collected mode (phases equal); "independent" integrates the two-point
    numerator over both phases separately.  The correlated form is the one
    consistent with the published contrast figures; see README.
    """
    num, denom = _averaged_numerator_denominator(table, budget, center_delta,
                                                 pair_positions)
    idx = int(np.argmin(np.abs(table.taus)))
    return float(num[idx] / denom ** 2)


def averaged_pair_curve(table: TwoTimeTable, budget: ContrastBudget,
                        center_delta: float,
                        pair_positions: str = "correlated"):
    """Full tau-resolved averaged numerator and intensity (compose internals)."""
    return _averaged_numerator_denominator(table, budget, center_delta,
                                           pair_positions)


def jitter_average(taus: np.ndarray, values: np.ndarray, jitter_sigma: float) -> np.ndarray:
    """Convolve a correlation curve with the two-detector timing response.

    Each detector jitters independently, so the time-difference axis sees a
    Gaussian of width sqrt(2) * sigma.  Edges are padded with their end
    values, which preserves the tau -> infinity limit.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if jitter_sigma == 0:
        return values.copy()
    step = float(np.min(np.diff(taus)))
    if step > jitter_sigma / 4:
        raise ParameterError(
            f"curve step {step:.3g} s undersamples jitter sigma {jitter_sigma:.3g} s "
            "(need step <= sigma/4)")
    sigma = math.sqrt(2.0) * jitter_sigma
    half = int(math.ceil(5 * sigma / step))
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) * step / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.concatenate([np.full(half, values[0]), values,
                             np.full(half, values[-1])])
    return np.convolve(padded, kernel, mode="valid")


def dark_count_mix(g2: float, signal_rate: float, dark_rate: float) -> float:
    """Uncorrelated Poissonian background mixed into both detector arms."""
    if signal_rate < 0 or dark_rate < 0:
        raise ParameterError("rates must be nonnegative")
    total = signal_rate + dark_rate
    if total == 0:
        raise ParameterError("signal and dark rate cannot both vanish")
    return (g2 * signal_rate ** 2 + 2 * signal_rate * dark_rate
            + dark_rate ** 2) / total ** 2


def branching_mix(g2_two_ion, g2_one_ion, single_ion_fraction: float):
    """Episode mixture of two-ion light (rate 2R) and one-ion light (rate R).

    Coincidences weight as episode probability times rate squared; the
    normalization uses the episode-averaged intensity squared.  Works on
    scalars or on tau-resolved curves.
    """
    f = single_ion_fraction
    if not 0 <= f < 1:
        raise ParameterError("single-ion fraction must lie in [0, 1)")
    g2_two_ion = np.asarray(g2_two_ion, dtype=float)
    g2_one_ion = np.asarray(g2_one_ion, dtype=float)
    mixed = ((1 - f) * 4.0 * g2_two_ion + f * g2_one_ion) / (2.0 - f) ** 2
    if mixed.ndim == 0:
        return float(mixed)
    return mixed


def zero_bin_average(taus: np.ndarray, values: np.ndarray, bin_width: float) -> float:
    """Average of a symmetric-in-tau curve over the two bins straddling zero.

    Mirrors what the correlator's zero-delay estimate sees in a histogram
    with bin edges at tau = 0.
    """
    taus = np.asarray(taus, dtype=float)
    mask = np.abs(taus) <= bin_width
    if not mask.any():
        raise ParameterError("curve does not cover the zero-delay bin")
    return float(np.mean(values[mask]))


# ---------------------------------------------------------------------------
# composition


@dataclass(frozen=True)
class PredictionCurve:
    """Model prediction over a slit scan, with a 1-sigma confidence band."""

    slit_positions: np.ndarray  # m
    deltas: np.ndarray  # rad
    g2_values: np.ndarray
    band_low: np.ndarray
    band_high: np.ndarray

    def __post_init__(self):
        n = len(self.slit_positions)
        for name in ("deltas", "g2_values", "band_low", "band_high"):
            if len(getattr(self, name)) != n:
                raise ParameterError("prediction arrays must have equal length")
        if not (np.asarray(self.band_low) <= np.asarray(self.g2_values) + 1e-12).all() \
           or not (np.asarray(self.g2_values) <= np.asarray(self.band_high) + 1e-12).all():
            raise ParameterError("band must bracket the central value")


# tau grid for the temporal curves fed into the jitter convolution:
# fine enough for sigma/4 sampling and long enough to be flat at the ends
_TAU_STEP = 0.1e-9
_TAU_MAX = 320e-9


class _CurveCache:
    """Two-ion and one-ion correlation tables, cached per saturation."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.taus = np.arange(0.0, _TAU_MAX, _TAU_STEP)
        self._tables: dict[float, tuple[TwoTimeTable, TwoTimeTable]] = {}

    def tables(self, saturation: float):
        if saturation not in self._tables:
            laser = replace(self.config.laser, saturation=saturation,
                            rabi_frequency=None)
            two = dicke.build_two_level_system(laser, self.config.atom)
            one = dicke.build_two_level_system(laser, self.config.atom, ion_count=1)
            self._tables[saturation] = (
                dicke.two_time_table(two, self.taus),
                dicke.two_time_table(one, self.taus),
            )
        return self._tables[saturation]


def composed_zero_value(cache: _CurveCache, budget: ContrastBudget,
                        center_delta: float, saturation: float,
                        bin_width: float,
                        pair_positions: str = "correlated") -> float:
    """One slit position through the full degradation pipeline."""
    table2, table1 = cache.tables(saturation)
    num, denom = averaged_pair_curve(table2, budget, center_delta, pair_positions)
    g2_curve = num / denom ** 2
    g1_curve = dicke.g2_from_table(table1, 0.0)
    mixed = branching_mix(g2_curve, g1_curve, budget.single_ion_fraction)
    # symmetric extension before convolving and reading the zero bin
    taus_full = np.concatenate([-cache.taus[:0:-1], cache.taus])
    curve_full = np.concatenate([mixed[:0:-1], mixed])
    smeared = jitter_average(taus_full, curve_full, budget.jitter_sigma)
    g0 = zero_bin_average(taus_full, smeared, bin_width)
    return dark_count_mix(g0, budget.signal_rate_per_detector, budget.dark_rate)


def compose_prediction(config: ExperimentConfig, budget: ContrastBudget,
                       slit_positions, uncertainties=None,
                       pair_positions: str = "correlated") -> PredictionCurve:
    """Degraded fringe prediction over a slit scan with a linearized band.

    The band propagates the quoted 1-sigma uncertainties of saturation,
    visibility and fringe period by central differences.
    """
    slit_positions = np.asarray(slit_positions, dtype=float)
    if slit_positions.size == 0:
        raise ParameterError("empty slit scan")
    if uncertainties is None:
        uncertainties = BUDGET_UNCERTAINTIES
    cache = _CurveCache(config)
    s0 = config.laser.saturation
    if s0 is None:
        s0 = dicke.saturation_conversions(config.laser, config.atom).saturation
    bin_width = config.detectors.bin_width
    dphase = separation_phase_shift(config.laser, config.ions, config.geometry)

    def deltas_for(period: float) -> np.ndarray:
        scaled = replace(config.geometry, fringe_period=period)
        return np.array([slit_to_phase(scaled, x) for x in slit_positions]) + dphase

    def scan(saturation: float, visibility: float, period: float) -> np.ndarray:
        bud = replace(budget, visibility=visibility,
                      slit_width_phase=budget.slit_width_phase * period0 / period)
        return np.array([
            composed_zero_value(cache, bud, d, saturation, bin_width, pair_positions)
            for d in deltas_for(period)
        ])

    v0 = budget.visibility
    period0 = config.geometry.fringe_period
    central = scan(s0, v0, period0)
    variance = np.zeros_like(central)
    ds = uncertainties.get("saturation", 0.0)
    if ds:
        variance += ((scan(s0 + ds, v0, period0) - scan(max(s0 - ds, 0.0), v0, period0)) / 2) ** 2
    dv = uncertainties.get("visibility", 0.0)
    if dv:
        variance += ((scan(s0, min(v0 + dv, 1.0), period0)
                      - scan(s0, max(v0 - dv, 0.0), period0)) / 2) ** 2
    dl = uncertainties.get("fringe_period", 0.0)
    if dl:
        variance += ((scan(s0, v0, period0 + dl) - scan(s0, v0, period0 - dl)) / 2) ** 2
    sigma = np.sqrt(variance)
    return PredictionCurve(
        slit_positions=slit_positions,
        deltas=deltas_for(period0),
        g2_values=central,
        band_low=central - sigma,
        band_high=central + sigma,
    )


def ideal_curve(config: ExperimentConfig, slit_positions) -> np.ndarray:
    """Immobile-emitter fringe (no degradation at all)."""
    s = config.laser.saturation
    dphase = separation_phase_shift(config.laser, config.ions, config.geometry)
    return np.array([
        dicke.g2_zero_analytic(s, slit_to_phase(config.geometry, x) + dphase)
        for x in np.asarray(slit_positions, dtype=float)
    ])


def visibility_curve(config: ExperimentConfig, slit_positions) -> np.ndarray:
    """Fringe with residual motion only (visibility applied, nothing else)."""
    s = config.laser.saturation
    v = config.motion.debye_waller_visibility
    dphase = separation_phase_shift(config.laser, config.ions, config.geometry)
    return np.array([
        g2_visibility(s, slit_to_phase(config.geometry, x) + dphase, v)
        for x in np.asarray(slit_positions, dtype=float)
    ])


# ---------------------------------------------------------------------------
# output formats


def prediction_to_csv(curve: PredictionCurve, path) -> None:
    rows = np.column_stack([
        curve.slit_positions * 1e3, curve.deltas, curve.g2_values,
        curve.band_low, curve.band_high,
    ])
    header = "slit_mm,delta_rad,g2,band_low,band_high"
    np.savetxt(path, rows, delimiter=",", header=header, comments="",
               fmt="%.9g")


def prediction_to_json(curve: PredictionCurve, path) -> None:
    payload = {
        "slit_positions_m": curve.slit_positions.tolist(),
        "delta_rad": curve.deltas.tolist(),
        "g2": curve.g2_values.tolist(),
        "band_low": curve.band_low.tolist(),
        "band_high": curve.band_high.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
