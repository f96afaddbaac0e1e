"""Optical unit arithmetic: powers, pulse energies, decibels, photon statistics.

Everything inside the package is SI (W, J, s, Hz). Nanowatts and
femtojoules only appear at the edges (config files, reports). Text
conversion is exact: ``from_nw(format_scaled(w, NANO)) == w`` for every
finite float ``w``, which keeps config files round-trippable.
"""

from __future__ import annotations

import math
from decimal import Decimal, localcontext

import numpy as np

Power = float
"""Optical power in watts."""

Energy = float
"""Optical pulse energy in joules."""

Decibel = float
"""Ratio in dB (positive means loss when used as an attenuation)."""

NANO = 9
FEMTO = 15
MICRO = 6

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0
TELECOM_WAVELENGTH = 1550e-9


def db_to_linear(loss):
    """Return ``10 ** (loss / 10)``; accepts scalars or arrays."""
    value = np.asarray(loss, dtype=float)
    if not np.all(np.isfinite(value)):
        raise ValueError(f"decibel value must be finite, got {loss!r}")
    out = np.power(10.0, value / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(ratio):
    value = np.asarray(ratio, dtype=float)
    if np.any(value <= 0) or not np.all(np.isfinite(value)):
        raise ValueError(f"linear ratio must be finite and > 0, got {ratio!r}")
    out = 10.0 * np.log10(value)
    return float(out) if out.ndim == 0 else out


def mean_photons_to_click_prob(mu, eta):
    """Probability that at least one of a Poisson(mu) photon number is detected.

    Each photon is detected independently with probability ``eta``, so the
    detected count is Poisson(eta * mu) and P(click) = 1 - exp(-eta * mu).
    Vectorised over ``mu``.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ValueError("mean photon number must be finite and >= 0")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency must lie in [0, 1], got {eta!r}")
    out = -np.expm1(-eta * mu)
    return float(out) if out.ndim == 0 else out


def pulse_energy_from_avg_power(avg_power: Power, rep_rate: float) -> Energy:
    """Energy per pulse of a pulse train with the given average power."""
    if not rep_rate > 0:
        raise ValueError(f"repetition rate must be > 0, got {rep_rate!r}")
    check_nonnegative(avg_power, "avg_power")
    return avg_power / rep_rate


def photon_energy(wavelength: float = TELECOM_WAVELENGTH) -> Energy:
    return PLANCK * LIGHT_SPEED / wavelength


def check_nonnegative(value: float, name: str) -> float:
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return value


# -- exact decimal <-> SI conversion -------------------------------------------

def _scale_down(text: str, exponent: int) -> float:
    with localcontext() as ctx:
        ctx.prec = 1200
        return float(Decimal(text).scaleb(-exponent))


def format_scaled(value: float, exponent: int) -> str:
    """Shortest decimal string ``s`` with ``_scale_down(s, exponent) == value``."""
    if not math.isfinite(value):
        raise ValueError(f"cannot convert non-finite value {value!r}")
    guess = value * 10.0**exponent
    candidates = [guess]
    lo = hi = guess
    for _ in range(4):
        lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
        candidates += [lo, hi]
    good = [repr(c) for c in candidates if _scale_down(repr(c), exponent) == value]
    if good:
        return min(good, key=len)
    # exact binary expansion always round-trips
    with localcontext() as ctx:
        ctx.prec = 1200
        return format(Decimal(value).scaleb(exponent).normalize(), "f")


def from_unit(value, exponent: int) -> float:
    """Convert a number given in ``10**-exponent`` units to SI, correctly rounded."""
    if isinstance(value, bool):
        raise TypeError("boolean is not a quantity")
    if isinstance(value, float):
        value = repr(value)
    return _scale_down(str(value), exponent)


def to_unit(value: float, exponent: int) -> float:
    """SI value expressed in ``10**-exponent`` units (display precision only)."""
    return float(format_scaled(value, exponent))


def from_nw(value) -> Power:
    return from_unit(value, NANO)


def from_fj(value) -> Energy:
    return from_unit(value, FEMTO)


def to_nw(value: Power) -> float:
    return to_unit(value, NANO)


def to_fj(value: Energy) -> float:
    return to_unit(value, FEMTO)
