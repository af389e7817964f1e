"""Electrical quantities reported by the meters and the measures derived from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

NOMINAL_VOLTAGE = 230.0
MAINS_FREQUENCY = 50.0


class InvalidSample(ValueError):
    """A sample that cannot be turned into derived measures."""


@dataclass(frozen=True)
class MeasureSample:
    """One meter reading: apparent power (VA), power factor and current (A)."""

    apparent_power: float
    power_factor: float
    current: float

    def __post_init__(self):
        if self.apparent_power < 0 or not math.isfinite(self.apparent_power):
            raise ValueError(f"apparent_power must be >= 0, got {self.apparent_power}")
        if not 0.0 <= self.power_factor <= 1.0:
            raise ValueError(f"power_factor must be in [0, 1], got {self.power_factor}")
        if self.current < 0 or not math.isfinite(self.current):
            raise ValueError(f"current must be >= 0, got {self.current}")

    @property
    def active_power(self) -> float:
        return self.apparent_power * self.power_factor


ZERO_SAMPLE = MeasureSample(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class DerivedMeasures:
    voltage: float
    active_power: float
    reactive_power: float


def sample_from_active(watts: float, power_factor: float = 1.0,
                       voltage: float = NOMINAL_VOLTAGE) -> MeasureSample:
    """Build the sample a meter would report for a load drawing ``watts`` of active power."""
    if watts < 0:
        raise ValueError(f"watts must be >= 0, got {watts}")
    if watts == 0:
        return MeasureSample(0.0, power_factor, 0.0)
    if power_factor <= 0:
        raise ValueError("a load drawing active power needs a positive power factor")
    apparent = watts / power_factor
    return MeasureSample(apparent, power_factor, apparent / voltage)


def derive_measures(sample: MeasureSample,
                    nominal_voltage: Optional[float] = None) -> DerivedMeasures:
    """Voltage, active and reactive power from a meter sample.

    A zero current leaves the voltage undefined; pass ``nominal_voltage`` to
    fall back to the mains rating instead of raising (used by the gateway,
    where tiny loads quantize to 0.00 A on the wire).
    """
    if not 0.0 <= sample.power_factor <= 1.0:
        raise ValueError(f"power_factor outside [0, 1]: {sample.power_factor}")
    if sample.current > 0:
        voltage = sample.apparent_power / sample.current
    elif nominal_voltage is not None:
        voltage = nominal_voltage
    elif sample.apparent_power > 0:
        raise InvalidSample("zero current with nonzero apparent power")
    else:
        raise InvalidSample("voltage is undefined for a zero-current sample")
    active = sample.apparent_power * sample.power_factor
    # max() guards the tiny negative residue of P**2 - Pa**2 when PF == 1
    reactive = math.sqrt(max(sample.apparent_power ** 2 - active ** 2, 0.0))
    return DerivedMeasures(voltage, active, reactive)


def trms(values: Iterable[float]) -> float:
    """True RMS of a sampled waveform: sqrt(sum(y_i**2) / n)."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("trms of an empty sequence")
    return math.sqrt(math.fsum(v * v for v in vals) / len(vals))
