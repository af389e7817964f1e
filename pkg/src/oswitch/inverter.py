"""PV inverter with solar -> battery -> grid priority."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np


@dataclass(frozen=True)
class InverterConfig:
    max_output_w: float = 800.0
    dc_capacity_w: float = 220.0
    conversion_efficiency: float = 0.9
    battery_capacity_wh: float = 600.0
    battery_efficiency: float = 0.9

    def __post_init__(self):
        if self.max_output_w <= 0:
            raise ValueError("max_output_w must be > 0")
        for name in ("conversion_efficiency", "battery_efficiency"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.battery_capacity_wh < 0:
            raise ValueError("battery_capacity_wh must be >= 0")


@dataclass(frozen=True)
class InverterState:
    battery_level_wh: float = 0.0
    current_dc_w: float = 0.0


class EnergyStep(NamedTuple):
    served_by_solar: float
    served_by_battery: float
    served_by_grid: float
    battery_charge: float
    state: InverterState


class PvTrace:
    """Piecewise-constant DC production, last observation carried forward."""

    def __init__(self, times, dc_watts):
        self.times = np.asarray(times, dtype=float)
        self.dc_watts = np.asarray(dc_watts, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.dc_watts.shape or self.times.size == 0:
            raise ValueError("times and dc_watts must be equal-length non-empty 1-d sequences")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("PV trace timestamps must be strictly increasing")
        if np.any(self.dc_watts < 0):
            raise ValueError("negative DC production in PV trace")
        self.end = float(self.times[-1])

    def covers(self, t: float) -> bool:
        return self.times[0] <= t <= self.end

    def __call__(self, t: float) -> float:
        if not self.covers(t):
            raise ValueError(f"time {t} outside PV trace [{self.times[0]}, {self.end}]")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.dc_watts[i])

    def on_grid(self, t0: float, n: int, dt: float) -> np.ndarray:
        """Values held at t0, t0+dt, ... (n points)."""
        grid = t0 + dt * np.arange(n)
        if grid[0] < self.times[0]:
            raise ValueError("grid starts before the PV trace")
        idx = np.searchsorted(self.times, grid + 1e-9, side="right") - 1
        return self.dc_watts[idx]

    @classmethod
    def read_csv(cls, path, end: Optional[float] = None) -> "PvTrace":
        times, vals = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                times.append(float(row["time_s"]))
                vals.append(float(row["dc_watts"]))
        trace = cls(times, vals)
        if end is not None:
            trace.end = max(trace.end, end)
        return trace


class Inverter:
    def __init__(self, config: InverterConfig = InverterConfig(), trace: Optional[PvTrace] = None,
                 state: Optional[InverterState] = None):
        self.config = config
        self.trace = trace
        self.state = state if state is not None else InverterState()

    def solar_ac(self, dc_w: float) -> float:
        return min(self.config.max_output_w, self.config.conversion_efficiency * dc_w)

    def available(self, dc_w: float, state: Optional[InverterState] = None) -> float:
        """Instantaneous AC power W the PV side can deliver."""
        state = self.state if state is None else state
        # battery discharge is rate-unbounded up to the output cap
        battery = self.config.max_output_w if state.battery_level_wh > 0 else 0.0
        return min(self.config.max_output_w, self.config.conversion_efficiency * dc_w + battery)

    def read_production(self, time: float) -> float:
        if self.trace is None:
            raise ValueError("inverter has no production trace")
        return self.available(self.trace(time))

    def step_energy(self, dt: float, demand_w: float, dc_w: Optional[float] = None,
                    state: Optional[InverterState] = None) -> EnergyStep:
        """Serve ``demand_w`` for ``dt`` seconds; energies in Wh.

        Battery efficiency is applied once, on charge (round-trip factor).
        """
        if dt <= 0:
            raise ValueError("dt must be > 0")
        if demand_w < 0:
            raise ValueError("demand must be >= 0")
        state = self.state if state is None else state
        cfg = self.config
        if dc_w is None:
            dc_w = state.current_dc_w
        hours = dt / 3600.0
        solar_w = self.solar_ac(dc_w)
        solar_used_w = min(demand_w, solar_w)
        rest_w = demand_w - solar_used_w
        battery_w = min(rest_w, cfg.max_output_w - solar_used_w,
                        state.battery_level_wh / hours)
        battery_w = max(battery_w, 0.0)
        grid_w = rest_w - battery_w
        level = state.battery_level_wh - battery_w * hours
        charge = min((solar_w - solar_used_w) * cfg.battery_efficiency * hours,
                     cfg.battery_capacity_wh - level)
        charge = max(charge, 0.0)
        level = min(max(level + charge, 0.0), cfg.battery_capacity_wh)
        new_state = replace(state, battery_level_wh=level, current_dc_w=dc_w)
        return EnergyStep(solar_used_w * hours, battery_w * hours, grid_w * hours, charge, new_state)

    def step(self, dt: float, demand_w: float, dc_w: float) -> EnergyStep:
        result = self.step_energy(dt, demand_w, dc_w)
        self.state = result.state
        return result
