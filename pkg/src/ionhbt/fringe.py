"""Sinusoidal fringe fitting for the intensity-scan calibration.

The summed singles rate scanned across slit positions follows
I(x) = A (1 + V cos(2 pi (x - x0) / L)); the fitted period and offset
anchor the slit-to-phase mapping used by every later measurement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class FringeFitError(RuntimeError):
    """Fit did not converge or the data show no usable fringe."""


class LowContrastError(FringeFitError):
    """Fitted visibility below the usable threshold."""


@dataclass
class FringeScan:
    """Fitted fringe calibration of one intensity scan."""

    positions: np.ndarray  # m
    intensities: np.ndarray  # counts/s
    fitted_period: float  # m
    fitted_offset: float  # m
    fit_errors: tuple[float, float]  # (period, offset) standard errors, m
    visibility: float
    amplitude: float

    def to_json(self, path) -> None:
        payload = {
            "positions_m": np.asarray(self.positions).tolist(),
            "intensities": np.asarray(self.intensities).tolist(),
            "fitted_period_m": self.fitted_period,
            "fitted_offset_m": self.fitted_offset,
            "period_error_m": self.fit_errors[0],
            "offset_error_m": self.fit_errors[1],
            "visibility": self.visibility,
            "amplitude": self.amplitude,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _dft_peak_frequency(x: np.ndarray, y: np.ndarray) -> float:
    """Spatial frequency (cycles/m) of the strongest non-DC component."""
    span = x.max() - x.min()
    centered = y - y.mean()
    # dense frequency grid from half a cycle over the span up to the
    # pseudo-Nyquist limit of the median sample spacing
    dx = np.median(np.diff(np.sort(x)))
    freqs = np.linspace(0.5 / span, 0.5 / dx, 512)
    power = np.abs(np.exp(-2j * np.pi * freqs[:, None] * x[None, :]) @ centered)
    return float(freqs[np.argmax(power)])


def _model_and_jacobian(p: np.ndarray, x: np.ndarray):
    amp, vis, period, offset = p
    phi = 2 * np.pi * (x - offset) / period
    cos_phi = np.cos(phi)
    sin_phi = np.sin(phi)
    model = amp * (1 + vis * cos_phi)
    jac = np.column_stack([
        1 + vis * cos_phi,
        amp * cos_phi,
        amp * vis * sin_phi * phi / period,
        amp * vis * sin_phi * 2 * np.pi / period,
    ])
    return model, jac


def fringe_fit(positions, intensities, min_visibility: float = 0.05,
               max_iter: int = 200) -> FringeScan:
    """Least-squares fringe fit with analytic Jacobian.

    Gauss-Newton with step damping, initialized from the discrete Fourier
    peak of the scan so the period/offset coupling cannot trap the fit in
    a harmonic.
    """
    x = np.asarray(positions, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise FringeFitError("positions and intensities must be equal-length 1-d")
    if len(x) < 5:
        raise FringeFitError(f"need at least 5 scan positions, got {len(x)}")
    if (y < 0).any():
        raise FringeFitError("negative intensity")

    freq = _dft_peak_frequency(x, y)
    period = 1.0 / freq
    mean = y.mean()
    cosine = np.cos(2 * np.pi * freq * x)
    sine = np.sin(2 * np.pi * freq * x)
    c1 = 2 * np.mean((y - mean) * cosine)
    s1 = 2 * np.mean((y - mean) * sine)
    phase = math.atan2(s1, c1)
    p = np.array([mean, math.hypot(c1, s1) / max(mean, 1e-300),
                  period, phase * period / (2 * np.pi)])

    prev_cost = np.inf
    for _ in range(max_iter):
        model, jac = _model_and_jacobian(p, x)
        resid = y - model
        cost = float(resid @ resid)
        try:
            step = np.linalg.lstsq(jac, resid, rcond=None)[0]
        except np.linalg.LinAlgError as exc:
            raise FringeFitError("singular Jacobian in fringe fit") from exc
        damping = 1.0
        for _ in range(30):
            trial = p + damping * step
            if trial[2] > 0:
                trial_model, _ = _model_and_jacobian(trial, x)
                trial_resid = y - trial_model
                if trial_resid @ trial_resid <= cost:
                    break
            damping /= 2
        else:
            break
        p = p + damping * step
        if abs(prev_cost - cost) <= 1e-14 * max(cost, 1.0):
            break
        prev_cost = cost
    else:
        raise FringeFitError(f"no convergence after {max_iter} iterations")

    amp, vis, period, offset = p
    if vis < 0:  # absorb a sign flip into a half-period offset shift
        vis = -vis
        offset += period / 2
    offset -= period * round(offset / period)  # canonical offset near zero
    if vis < min_visibility:
        raise LowContrastError(
            f"fitted visibility {vis:.3f} below threshold {min_visibility}")

    model, jac = _model_and_jacobian(np.array([amp, vis, period, offset]), x)
    resid = y - model
    dof = max(len(x) - 4, 1)
    variance = float(resid @ resid) / dof
    try:
        cov = variance * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError as exc:
        raise FringeFitError("singular normal equations in fringe fit") from exc
    return FringeScan(
        positions=x, intensities=y,
        fitted_period=float(period), fitted_offset=float(offset),
        fit_errors=(float(math.sqrt(max(cov[2, 2], 0.0))),
                    float(math.sqrt(max(cov[3, 3], 0.0)))),
        visibility=float(vis), amplitude=float(amp),
    )
