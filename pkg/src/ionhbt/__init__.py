"""Photon statistics of a laser-driven two-ion crystal.

Simulation chain: trap/laser/detector geometry -> optical phase delta ->
driven-dissipative two-emitter engine -> contrast-degraded predictions ->
synthetic detector click streams -> g2(tau) recovery with a streaming
correlator.
"""

__version__ = "0.1.0"

from .params import (
    AtomParams,
    DetectorParams,
    ExperimentConfig,
    GeometryMapping,
    IonCrystalParams,
    LaserParams,
    MotionParams,
    ParameterError,
)
from .geometry import DetectionDirection, ion_separation, optical_phase, slit_to_phase

__all__ = [
    "AtomParams",
    "DetectorParams",
    "DetectionDirection",
    "ExperimentConfig",
    "GeometryMapping",
    "IonCrystalParams",
    "LaserParams",
    "MotionParams",
    "ParameterError",
    "ion_separation",
    "optical_phase",
    "slit_to_phase",
    "__version__",
]
