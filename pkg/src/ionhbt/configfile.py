"""Config file reading/writing: INI sections with explicit-unit values."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict
from pathlib import Path

from .params import (
    AtomParams,
    DetectorParams,
    ExperimentConfig,
    GeometryMapping,
    IonCrystalParams,
    LaserParams,
    MotionParams,
    SimulationParams,
)
from .units import UnitError, parse_frequency_rad, parse_quantity, parse_vector

_TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    """Config file missing, malformed, or failing parameter validation."""


def _get(parser, section, option, convert, default=None, required=False):
    if not parser.has_option(section, option):
        if required:
            raise ConfigError(f"[{section}] {option}: missing required value")
        return default
    raw = parser.get(section, option).strip()
    if raw.lower() in ("derived", "none", ""):
        return None
    try:
        return convert(raw)
    except (UnitError, ValueError) as exc:
        raise ConfigError(f"[{section}] {option}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def quantity(section, option, default=None, required=False):
        return _get(parser, section, option, parse_quantity, default, required)

    def frequency(section, option, default=None, required=False):
        return _get(parser, section, option, parse_frequency_rad, default, required)

    def vector(section, option, default):
        return _get(parser, section, option, parse_vector, default)

    try:
        ions = IonCrystalParams(
            ion_mass=quantity("ions", "ion_mass", IonCrystalParams.ion_mass),
            ion_charge=quantity("ions", "ion_charge", IonCrystalParams.ion_charge),
            axial_trap_frequency=frequency(
                "ions", "axial_trap_frequency",
                IonCrystalParams.axial_trap_frequency),
            radial_trap_frequencies=tuple(
                parse_frequency_rad(part) for part in parser.get(
                    "ions", "radial_trap_frequencies",
                    fallback="1.275 MHz, 1.568 MHz").split(",")),
            separation=quantity("ions", "separation", None),
            crystal_axis=vector("ions", "crystal_axis", (0.0, 0.0, 1.0)),
        )
        laser = LaserParams(
            wavelength=quantity("laser", "wavelength", LaserParams.wavelength),
            propagation_direction=vector(
                "laser", "propagation_direction",
                LaserParams.propagation_direction),
            detuning=frequency("laser", "detuning", LaserParams.detuning),
            saturation=quantity("laser", "saturation", None),
            rabi_frequency=frequency("laser", "rabi_frequency", None),
        )
        if laser.saturation is None and laser.rabi_frequency is None:
            laser = LaserParams()
        atom = AtomParams(
            excited_lifetime=quantity("atom", "excited_lifetime",
                                      AtomParams.excited_lifetime),
            branching_to_metastable=quantity(
                "atom", "branching_to_metastable",
                AtomParams.branching_to_metastable),
            metastable_dwell_fraction=quantity(
                "atom", "metastable_dwell_fraction",
                AtomParams.metastable_dwell_fraction),
        )
        motion = MotionParams(
            mean_phonon_number=quantity("motion", "mean_phonon_number",
                                        MotionParams.mean_phonon_number),
            debye_waller_visibility=quantity(
                "motion", "debye_waller_visibility",
                MotionParams.debye_waller_visibility),
        )
        detectors = DetectorParams(
            efficiency=quantity("detectors", "efficiency",
                                DetectorParams.efficiency),
            dark_rate=quantity("detectors", "dark_rate", DetectorParams.dark_rate),
            timing_jitter_sigma=quantity("detectors", "timing_jitter_sigma",
                                         DetectorParams.timing_jitter_sigma),
            dead_time=quantity("detectors", "dead_time", DetectorParams.dead_time),
            bin_width=quantity("detectors", "bin_width", DetectorParams.bin_width),
            correlation_window=quantity("detectors", "correlation_window",
                                        DetectorParams.correlation_window),
        )
        geometry = GeometryMapping(
            fringe_period=quantity("geometry", "fringe_period",
                                   GeometryMapping.fringe_period),
            fringe_offset=quantity("geometry", "fringe_offset", 0.0) or 0.0,
            slit_width=quantity("geometry", "slit_width",
                                GeometryMapping.slit_width),
            slit_position=quantity("geometry", "slit_position", 0.0) or 0.0,
            polar_angle_reference=quantity("geometry", "polar_angle_reference",
                                           GeometryMapping.polar_angle_reference),
            reference_separation=quantity("geometry", "reference_separation", None),
        )
        simulation = SimulationParams(
            collection_weight=quantity("simulation", "collection_weight",
                                       SimulationParams.collection_weight),
            phase_block=quantity("simulation", "phase_block",
                                 SimulationParams.phase_block),
            repump_rate=frequency("simulation", "repump_rate", None),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig(ions=ions, laser=laser, atom=atom, motion=motion,
                            detectors=detectors, geometry=geometry,
                            simulation=simulation)


def dump_config(config: ExperimentConfig, path) -> None:
    """Write a config back out with convenience units."""
    c = config

    def freq(x):  # rad/s -> MHz text
        return f"{x / _TWO_PI / 1e6:.12g} MHz"

    lines = [
        "[ions]",
        f"ion_mass = {c.ions.ion_mass / 1.66053906892e-27:.12g} u",
        f"ion_charge = {c.ions.ion_charge / 1.602176634e-19:.12g} e",
        f"axial_trap_frequency = {c.ions.axial_trap_frequency / _TWO_PI / 1e3:.12g} kHz",
        "radial_trap_frequencies = "
        + ", ".join(freq(w) for w in c.ions.radial_trap_frequencies),
        "separation = " + (f"{c.ions.separation * 1e6:.12g} um"
                           if c.ions.separation else "derived"),
        "crystal_axis = " + ", ".join(f"{v:.12g}" for v in c.ions.crystal_axis),
        "",
        "[laser]",
        f"wavelength = {c.laser.wavelength * 1e9:.12g} nm",
        "propagation_direction = "
        + ", ".join(f"{v:.12g}" for v in c.laser.propagation_direction),
        f"detuning = {freq(c.laser.detuning)}",
        f"saturation = {c.laser.saturation:.12g}" if c.laser.saturation is not None
        else f"rabi_frequency = {freq(c.laser.rabi_frequency)}",
        "",
        "[atom]",
        f"excited_lifetime = {c.atom.excited_lifetime * 1e9:.12g} ns",
        f"branching_to_metastable = {c.atom.branching_to_metastable:.12g}",
        f"metastable_dwell_fraction = {c.atom.metastable_dwell_fraction:.12g}",
        "",
        "[motion]",
        f"mean_phonon_number = {c.motion.mean_phonon_number:.12g}",
        f"debye_waller_visibility = {c.motion.debye_waller_visibility:.12g}",
        "",
        "[detectors]",
        f"efficiency = {c.detectors.efficiency:.12g}",
        f"dark_rate = {c.detectors.dark_rate:.12g} Hz",
        f"timing_jitter_sigma = {c.detectors.timing_jitter_sigma * 1e9:.12g} ns",
        f"dead_time = {c.detectors.dead_time * 1e9:.12g} ns",
        f"bin_width = {c.detectors.bin_width * 1e9:.12g} ns",
        f"correlation_window = {c.detectors.correlation_window * 1e9:.12g} ns",
        "",
        "[geometry]",
        f"fringe_period = {c.geometry.fringe_period * 1e3:.12g} mm",
        f"fringe_offset = {c.geometry.fringe_offset * 1e3:.12g} mm",
        f"slit_width = {c.geometry.slit_width * 1e3:.12g} mm",
        f"slit_position = {c.geometry.slit_position * 1e3:.12g} mm",
        f"polar_angle_reference = {math.degrees(c.geometry.polar_angle_reference):.12g} deg",
        "reference_separation = " + (
            f"{c.geometry.reference_separation * 1e6:.12g} um"
            if c.geometry.reference_separation else "none"),
        "",
        "[simulation]",
        f"collection_weight = {c.simulation.collection_weight:.12g}",
        f"phase_block = {c.simulation.phase_block * 1e6:.12g} us",
        "repump_rate = " + (f"{freq(c.simulation.repump_rate)}"
                            if c.simulation.repump_rate else "derived"),
        "",
    ]
    Path(path).write_text("\n".join(lines))


def _canonical(value):
    """Round floats to 9 significant digits so file round-trips hash equal."""
    if isinstance(value, float):
        return float(f"{value:.9e}")
    if isinstance(value, dict):
        return {k: _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    return value


def config_hash(config: ExperimentConfig) -> str:
    """Digest of the SI-normalized parameter values, stable across formatting."""
    payload = json.dumps(_canonical(asdict(config)), sort_keys=True, default=float)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
