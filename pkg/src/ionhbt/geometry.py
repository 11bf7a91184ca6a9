"""Trap and detection geometry: everything collapses into one phase delta.

delta is the optical path difference (in radians) between a photon
scattered by ion 1 and one scattered by ion 2, combining the laser arrival
phase k_L . d and the detection direction term -k d cos(theta).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .params import (
    EPSILON_0,
    ExperimentConfig,
    GeometryMapping,
    IonCrystalParams,
    LaserParams,
    ParameterError,
)


@dataclass(frozen=True)
class DetectionDirection:
    """A detector placement reduced to its phase and solid-angle weight."""

    phase: float  # rad, unwrapped
    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ParameterError("detection weight must be nonnegative")

    @property
    def wrapped_phase(self) -> float:
        """Phase folded into (-pi, pi] for display."""
        return wrap_phase(self.phase)


def wrap_phase(delta: float) -> float:
    """Fold an unwrapped phase into (-pi, pi]."""
    wrapped = math.fmod(delta + math.pi, 2 * math.pi)
    if wrapped <= 0:
        wrapped += 2 * math.pi
    return wrapped - math.pi


def ion_separation(crystal: IonCrystalParams) -> float:
    """Equilibrium distance of two ions balancing trap force and Coulomb repulsion.

    d^3 = q^2 / (2 pi eps0 m omega_z^2).  An explicitly configured separation
    wins over the derived one; a >2% disagreement between the two earns a
    warning because it usually means a stale config.
    """
    q = crystal.ion_charge
    m = crystal.ion_mass
    omega = crystal.axial_trap_frequency
    derived = (q * q / (2 * math.pi * EPSILON_0 * m * omega * omega)) ** (1.0 / 3.0)
    if crystal.separation is not None:
        if abs(crystal.separation - derived) > 0.02 * derived:
            warnings.warn(
                f"configured separation {crystal.separation:.3e} m deviates "
                f">2% from the value {derived:.3e} m implied by the axial "
                "frequency", stacklevel=2)
        return crystal.separation
    return derived


def optical_phase(laser: LaserParams, crystal: IonCrystalParams,
                  detector_direction) -> float:
    """Unwrapped delta = (k_L - k r_hat) . d for a far-field detector along r_hat."""
    r_hat = np.asarray(detector_direction, dtype=float)
    norm = np.linalg.norm(r_hat)
    if not math.isclose(norm, 1.0, rel_tol=1e-6):
        raise ParameterError(f"detector direction must be a unit vector (|r| = {norm:.6g})")
    r_hat = r_hat / norm
    k = laser.wavenumber
    k_l = k * np.asarray(laser.propagation_direction)
    d_vec = ion_separation(crystal) * np.asarray(crystal.crystal_axis)
    return float(np.dot(k_l - k * r_hat, d_vec))


def separation_phase_shift(laser: LaserParams, crystal: IonCrystalParams,
                           mapping: GeometryMapping,
                           reference_separation: float | None = None) -> float:
    """Phase shift caused by re-tuning the ion distance at a fixed detector.

    delta is linear in d, so the shift is (k_L - k r_hat) . axis * (d - d_ref)
    evaluated at the reference polar angle.
    """
    d_now = ion_separation(crystal)
    d_ref = reference_separation
    if d_ref is None:
        d_ref = mapping.reference_separation
    if d_ref is None:
        return 0.0
    axis = np.asarray(crystal.crystal_axis)
    k = laser.wavenumber
    k_l = k * np.asarray(laser.propagation_direction)
    # detector in the plane spanned by the axis and its orthogonal complement
    cos_theta = math.cos(mapping.polar_angle_reference)
    slope = float(np.dot(k_l, axis)) - k * cos_theta  # rad per metre of d
    return slope * (d_now - d_ref)


def slit_to_phase(mapping: GeometryMapping, slit_position: float) -> float:
    """delta at a slit position, measured from the calibrated fringe maximum."""
    return 2 * math.pi * (slit_position - mapping.fringe_offset) / mapping.fringe_period


def phase_to_slit(mapping: GeometryMapping, delta: float) -> float:
    """Inverse of slit_to_phase (exact, both maps are affine)."""
    return mapping.fringe_offset + delta * mapping.fringe_period / (2 * math.pi)


def slit_phase_width(mapping: GeometryMapping) -> float:
    """Phase range subtended by the open slit, rad."""
    return 2 * math.pi * mapping.slit_width / mapping.fringe_period


def direction_for_slit(config: ExperimentConfig, slit_position: float,
                       weight: float = 1.0) -> DetectionDirection:
    """Detection phase for a slit position, including any distance re-tuning."""
    delta = slit_to_phase(config.geometry, slit_position)
    delta += separation_phase_shift(config.laser, config.ions, config.geometry)
    return DetectionDirection(phase=delta, weight=weight)
