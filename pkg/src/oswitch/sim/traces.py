"""Synthetic outlet and PV traces on a fixed time grid, plus their CSV form.

Traces are piecewise constant (last observation carried forward). On disk
only the breakpoints are written: ``time_s,outlet_id,watts`` for outlets and
``time_s,dc_watts`` for the PV string.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

DAY = 86400
ARCHETYPES = ("fridge", "cycler", "resistive", "spiky", "constant")


class TraceError(ValueError):
    pass


@dataclass
class Traces:
    """Outlet loads (n_outlets x n_steps, watts) and PV DC power (n_steps) on a uniform grid."""

    outlets: np.ndarray
    pv_dc: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        self.outlets = np.atleast_2d(np.asarray(self.outlets, dtype=float))
        self.pv_dc = np.asarray(self.pv_dc, dtype=float)
        if self.outlets.shape[1] != self.pv_dc.shape[0]:
            raise TraceError("outlet and PV traces have different lengths")
        if np.any(self.outlets < 0) or np.any(self.pv_dc < 0):
            raise TraceError("traces must be non-negative")

    @property
    def n_outlets(self) -> int:
        return self.outlets.shape[0]

    @property
    def n_steps(self) -> int:
        return self.pv_dc.shape[0]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    def index(self, t: float) -> int:
        i = int(np.floor((t - self.t0) / self.dt + 1e-9))
        return min(max(i, 0), self.n_steps - 1)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.outlets).tobytes())
        h.update(np.ascontiguousarray(self.pv_dc).tobytes())
        return h.hexdigest()


# --- generators --------------------------------------------------------------

def _hours_mask(n: int, dt: float, hours: Sequence[Sequence[float]], days: int,
                jitter_s: float, rng: np.random.Generator) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    per_day = int(round(DAY / dt))
    for d in range(days):
        for start_h, end_h in hours:
            a = start_h * 3600 + (rng.normal(0, jitter_s) if jitter_s else 0.0)
            b = end_h * 3600 + (rng.normal(0, jitter_s) if jitter_s else 0.0)
            ia = d * per_day + int(np.clip(a / dt, 0, per_day))
            ib = d * per_day + int(np.clip(b / dt, 0, per_day))
            mask[ia:ib] = True
    return mask


def _fridge(n, dt, p, rng):
    on_w = float(p.get("on_w", 80.0))
    period = float(p.get("period_s", 2400.0))
    duty = float(p.get("duty", 0.4))
    jitter = float(p.get("jitter", 0.1))
    # a non-zero standby draw makes every off->on step a risk while on PV
    out = np.full(n, float(p.get("off_w", 0.0)))
    t = rng.uniform(0, period)  # random phase
    on = bool(rng.random() < duty)
    while t < n * dt:
        length = period * (duty if on else 1 - duty) * (1 + jitter * rng.uniform(-1, 1))
        a, b = int(t / dt), int(min(t + length, n * dt) / dt)
        if on:
            out[a:b] = on_w
        t += max(length, dt)
        on = not on
    return out


def _dither(n, dt, base, amplitude, hold_s, rng):
    """Piecewise-constant multiplicative wobble around ``base``."""
    if amplitude <= 0 or hold_s <= 0:
        return np.full(n, float(base))
    holds = rng.exponential(hold_s, size=int(n * dt / hold_s * 2) + 16)
    edges = np.concatenate([[0.0], np.cumsum(np.maximum(holds, dt))])
    k = np.searchsorted(edges, np.arange(n) * dt, side="right") - 1
    levels = base * (1 + amplitude * rng.uniform(-1, 1, size=edges.size))
    return levels[k]


def _resistive(n, dt, p, rng, days):
    watts = float(p.get("watts", 100.0))
    hours = p.get("hours", [[0, 24]])
    mask = _hours_mask(n, dt, hours, days, float(p.get("start_jitter_s", 0.0)), rng)
    wobble = _dither(n, dt, watts, float(p.get("dither", 0.0)), float(p.get("dither_hold_s", 60.0)), rng)
    return np.where(mask, wobble, 0.0)


def _spiky(n, dt, p, rng, days):
    base = float(p.get("baseline_w", 40.0))
    spike = float(p.get("spike_w", 100.0))
    prob = float(p.get("spike_prob", 0.002))
    dur = float(p.get("spike_duration_s", 20.0))
    hours = p.get("hours")
    out = np.full(n, base)
    if prob > 0:
        starts = np.flatnonzero(rng.random(n) < prob * dt)
        lengths = np.maximum(1, np.round(rng.exponential(dur, size=starts.size) / dt)).astype(int)
        for s, m in zip(starts, lengths):
            out[s:s + m] = base + spike
    if hours is not None:
        mask = _hours_mask(n, dt, hours, days, float(p.get("start_jitter_s", 0.0)), rng)
        out = np.where(mask, out, float(p.get("idle_w", 0.0)))
    return out


def _pv(n, dt, p, rng, days):
    peak = float(p.get("peak_dc_w", 220.0))
    sunrise = float(p.get("sunrise_h", 6.0)) * 3600
    sunset = float(p.get("sunset_h", 20.0)) * 3600
    cloud_prob = float(p.get("cloud_prob", 0.0))
    cloud_depth = float(p.get("cloud_depth", 0.3))
    cloud_dur = float(p.get("cloud_duration_s", 120.0))
    t = np.arange(n) * dt
    tod = np.mod(t, DAY)
    phase = np.clip((tod - sunrise) / (sunset - sunrise), 0.0, 1.0)
    clear = peak * np.sin(np.pi * phase) ** 1.5
    factor = np.ones(n)
    if cloud_prob > 0:
        starts = np.flatnonzero(rng.random(n) < cloud_prob * dt)
        lengths = np.maximum(1, np.round(rng.exponential(cloud_dur, size=starts.size) / dt)).astype(int)
        depths = rng.uniform(0.5, 1.0, size=starts.size) * cloud_depth
        for s, m, d in zip(starts, lengths, depths):
            factor[s:s + m] = np.minimum(factor[s:s + m], 1.0 - d)
    return np.floor(clear * factor)


def generate_traces(spec: Mapping, seed: int) -> Traces:
    """Deterministic synthetic traces from an archetype spec.

    ``spec`` keys: ``days``, ``resolution_s``, ``outlets`` (list of tables
    with an ``archetype`` key) and ``pv``.
    """
    days = int(spec.get("days", 1))
    dt = float(spec.get("resolution_s", 1.0))
    if days < 1:
        raise TraceError("days must be >= 1")
    n = int(round(days * DAY / dt))
    outlet_specs = list(spec.get("outlets", []))
    children = np.random.SeedSequence(seed).spawn(len(outlet_specs) + 1)
    rows = []
    for p, ss in zip(outlet_specs, children):
        rng = np.random.default_rng(ss)
        kind = p.get("archetype")
        if kind in ("fridge", "cycler"):
            w = _fridge(n, dt, p, rng)
        elif kind == "resistive":
            w = _resistive(n, dt, p, rng, days)
        elif kind == "spiky":
            w = _spiky(n, dt, p, rng, days)
        elif kind == "constant":
            w = np.full(n, float(p.get("watts", 0.0)))
        else:
            raise TraceError(f"invalid archetype {kind!r}; expected one of {ARCHETYPES}")
        rows.append(np.round(w, 1))
    pv = _pv(n, dt, dict(spec.get("pv", {})), np.random.default_rng(children[-1]), days)
    outlets = np.vstack(rows) if rows else np.zeros((0, n))
    return Traces(outlets, pv, dt)


# --- CSV I/O -----------------------------------------------------------------

def _breakpoints(values: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.concatenate([[True], values[1:] != values[:-1]]))


def write_traces(traces: Traces, out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outlets_path = out / "outlets.csv"
    pv_path = out / "pv.csv"
    rows = []
    for o in range(traces.n_outlets):
        v = traces.outlets[o]
        for i in _breakpoints(v):
            rows.append((i, o, v[i]))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(outlets_path, "w", newline="") as fh:
        fh.write("time_s,outlet_id,watts\n")
        for i, o, w in rows:
            fh.write(f"{traces.t0 + i * traces.dt:.3f},{o},{w:.1f}\n")
    with open(pv_path, "w", newline="") as fh:
        fh.write("time_s,dc_watts\n")
        for i in _breakpoints(traces.pv_dc):
            fh.write(f"{traces.t0 + i * traces.dt:.3f},{traces.pv_dc[i]:.1f}\n")
    return {"outlets": outlets_path, "pv": pv_path}


def _hold_on_grid(times: np.ndarray, values: np.ndarray, n: int, dt: float, what: str) -> np.ndarray:
    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    if times.size == 0 or times[0] > 1e-9:
        raise TraceError(f"trace gap: {what} has no value at t=0")
    if np.any(np.diff(times) <= 0):
        raise TraceError(f"{what}: timestamps must be strictly increasing")
    idx = np.searchsorted(times, np.arange(n) * dt + 1e-9, side="right") - 1
    return values[idx]


def read_traces(outlets_csv, pv_csv, duration_s: float, dt: float = 1.0) -> Traces:
    """Load breakpoint CSVs onto a uniform grid covering ``[0, duration_s)``."""
    n = int(round(duration_s / dt))
    by_outlet: Dict[int, List] = {}
    with open(outlets_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            by_outlet.setdefault(int(row["outlet_id"]), []).append(
                (float(row["time_s"]), float(row["watts"])))
    if not by_outlet:
        raise TraceError(f"{outlets_csv}: no outlet rows")
    ids = sorted(by_outlet)
    if ids != list(range(len(ids))):
        raise TraceError(f"outlet ids must be 0..n-1, got {ids}")
    grid = []
    for o in ids:
        arr = np.array(by_outlet[o])
        grid.append(_hold_on_grid(arr[:, 0], arr[:, 1], n, dt, f"outlet {o}"))
    pv = []
    with open(pv_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            pv.append((float(row["time_s"]), float(row["dc_watts"])))
    if not pv:
        raise TraceError(f"{pv_csv}: no PV rows")
    arr = np.array(pv)
    return Traces(np.vstack(grid), _hold_on_grid(arr[:, 0], arr[:, 1], n, dt, "PV trace"), dt)


def digest_files(paths: Sequence[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()
