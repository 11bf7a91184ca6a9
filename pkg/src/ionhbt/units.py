"""Parsing of config values with explicit unit suffixes.

Internally everything is SI (m, s, Hz, rad/s, kg, C). Config files may say
"760 kHz", "6.7 um", "1.6 ns", "1.94 mm" etc.; the suffix is mandatory for
dimensioned quantities so a bare number is never silently misread.
"""

from __future__ import annotations

import math
import re

# multiplier to SI for each accepted suffix
_UNIT_SCALE = {
    # lengths
    "m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "pm": 1e-12,
    # times
    "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12,
    # plain frequencies (cycles/s)
    "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9,
    # masses
    "kg": 1.0, "u": 1.66053906892e-27, "amu": 1.66053906892e-27,
    # charge
    "C": 1.0, "e": 1.602176634e-19,
    # angles
    "rad": 1.0, "deg": math.pi / 180.0, "pi": math.pi,
}

_VALUE_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-zµ]*)\s*$")


class UnitError(ValueError):
    """A config value could not be parsed as 'number [unit]'."""


def parse_quantity(text: str, expect: str | None = None) -> float:
    """Parse "760 kHz" -> 760e3. `expect` names the dimension for errors.

    Dimensionless values are plain numbers.  Frequencies parse to Hz
    (cycles/s); callers that want angular frequency multiply by 2*pi.
    """
    if isinstance(text, (int, float)):
        return float(text)
    m = _VALUE_RE.match(text)
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}"
                        + (f" (expected {expect})" if expect else ""))
    number, suffix = m.groups()
    try:
        value = float(number)
    except ValueError as exc:
        raise UnitError(f"bad number in {text!r}") from exc
    if not suffix:
        return value
    if suffix not in _UNIT_SCALE:
        raise UnitError(f"unknown unit {suffix!r} in {text!r}")
    return value * _UNIT_SCALE[suffix]


def parse_frequency_rad(text: str) -> float:
    """Parse a frequency given in cycles ("30 MHz") to rad/s."""
    return 2.0 * math.pi * parse_quantity(text, expect="frequency")


def parse_vector(text: str) -> tuple[float, float, float]:
    """Parse "0.707, 0, 0.707" into a 3-tuple."""
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 3:
        raise UnitError(f"expected 3 components, got {text!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]
