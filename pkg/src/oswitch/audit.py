"""Office consumption accounting: weekly profile, baseline, closing-hours load and reduction potential.

Times are seconds from a Monday 00:00 origin, so ``weekday = (t // 86400) % 7``
with 0 = Monday. Every trace is piecewise constant (last observation carried
forward) and ends at its last timestamp unless an explicit ``end`` is given.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

DAY = 86400.0
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
DEFAULT_TARIFF = 0.20  # currency per kWh


class AuditError(ValueError):
    pass


@dataclass
class ConsumptionTrace:
    times: np.ndarray
    watts: np.ndarray
    end: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.watts = np.asarray(self.watts, dtype=float)
        if self.times.shape != self.watts.shape or self.times.ndim != 1:
            raise AuditError("times and watts must be 1-D and the same length")
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise AuditError(f"trace {self.name!r}: timestamps must be strictly increasing")
        if self.end is None and self.times.size:
            self.end = float(self.times[-1])
        if self.times.size and self.end < self.times[-1]:
            raise AuditError("trace end precedes its last sample")

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @classmethod
    def constant(cls, watts: float, start: float, end: float, name: str = "") -> "ConsumptionTrace":
        return cls([start], [watts], end, name)

    def segments(self) -> Iterable[Tuple[float, float, float]]:
        """``(t0, t1, watts)`` holding intervals; zero-length ones are skipped."""
        bounds = np.append(self.times, self.end)
        for a, b, w in zip(bounds[:-1], bounds[1:], self.watts):
            if b > a:
                yield float(a), float(b), float(w)

    def mean(self) -> float:
        span = self.end - self.start
        if span <= 0:
            return float(self.watts[-1])
        return math.fsum((b - a) * w for a, b, w in self.segments()) / span

    @classmethod
    def total(cls, traces: Sequence["ConsumptionTrace"], name: str = "total") -> "ConsumptionTrace":
        """Pointwise sum; each line contributes 0 W before its first sample."""
        if not traces:
            raise AuditError("no lines to sum")
        times = np.unique(np.concatenate([t.times for t in traces]))
        watts = np.zeros(times.size)
        for t in traces:
            idx = np.searchsorted(t.times, times, side="right") - 1
            watts += np.where(idx >= 0, t.watts[np.maximum(idx, 0)], 0.0)
        return cls(times, watts, max(t.end for t in traces), name)


@dataclass
class ClosingSchedule:
    """Opening hours per weekday; everything else counts as closed."""

    open_hours: Dict[int, List[Tuple[float, float]]] = field(default_factory=dict)

    def __post_init__(self):
        for day, spans in self.open_hours.items():
            if not 0 <= day < 7:
                raise AuditError(f"weekday {day} out of range 0..6")
            spans.sort()
            for a, b in spans:
                if not 0 <= a < b <= 24:
                    raise AuditError(f"bad opening span {a}-{b} on {WEEKDAYS[day]}")
            for (_, b1), (a2, _) in zip(spans, spans[1:]):
                if a2 < b1:
                    raise AuditError(f"overlapping opening spans on {WEEKDAYS[day]}")

    @classmethod
    def read_csv(cls, path) -> "ClosingSchedule":
        hours: Dict[int, List[Tuple[float, float]]] = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#") or row[0].strip() == "weekday":
                    continue
                if len(row) != 3:
                    raise AuditError(f"schedule rows need weekday,open_hour,close_hour: {row}")
                day = parse_weekday(row[0])
                hours.setdefault(day, []).append((float(row[1]), float(row[2])))
        return cls(hours)

    def closed_intervals(self, t0: float, t1: float) -> List[Tuple[float, float]]:
        """Closed time inside ``[t0, t1)`` as sorted, merged absolute intervals."""
        out: List[Tuple[float, float]] = []
        day = math.floor(t0 / DAY)
        while day * DAY < t1:
            base = day * DAY
            cursor = base
            for a, b in self.open_hours.get(day % 7, []):
                out.append((cursor, base + a * 3600))
                cursor = base + b * 3600
            out.append((cursor, base + DAY))
            day += 1
        merged: List[Tuple[float, float]] = []
        for a, b in out:
            a, b = max(a, t0), min(b, t1)
            if b <= a:
                continue
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        return merged


def parse_weekday(text: str) -> int:
    s = text.strip().lower()
    if s.isdigit():
        d = int(s)
        if 0 <= d < 7:
            return d
    elif s[:3] in WEEKDAYS:
        return WEEKDAYS.index(s[:3])
    raise AuditError(f"unknown weekday {text!r} (0=Mon..6=Sun or a name)")


# --- measures ----------------------------------------------------------------

def baseline(trace: ConsumptionTrace) -> float:
    """Smallest value the trace ever holds."""
    if len(trace) == 0:
        raise AuditError("baseline of an empty trace")
    return float(trace.watts.min())


def closing_hours_average(trace: ConsumptionTrace, schedule: ClosingSchedule) -> float:
    if len(trace) == 0:
        raise AuditError("closing-hours average of an empty trace")
    closed = schedule.closed_intervals(trace.start, trace.end)
    energy, span = [], 0.0
    i = 0
    for a, b, w in trace.segments():
        while i < len(closed) and closed[i][1] <= a:
            i += 1
        j = i
        while j < len(closed) and closed[j][0] < b:
            ov = min(b, closed[j][1]) - max(a, closed[j][0])
            if ov > 0:
                energy.append(ov * w)
                span += ov
            j += 1
    if span <= 0:
        raise AuditError("schedule has no closed time overlapping the trace")
    return math.fsum(energy) / span


@dataclass(frozen=True)
class DailyEnergy:
    day: int
    weekday: int
    kwh: float
    cost: float


def weekly_profile(trace: ConsumptionTrace, tariff: float = DEFAULT_TARIFF) -> List[DailyEnergy]:
    """Energy and cost per calendar day touched by the trace."""
    if tariff < 0:
        raise AuditError("tariff must be >= 0")
    per_day: Dict[int, List[float]] = {}
    for a, b, w in trace.segments():
        d = math.floor(a / DAY)
        while a < b:
            cut = min(b, (d + 1) * DAY)
            per_day.setdefault(d, []).append((cut - a) * w)
            a, d = cut, d + 1
    out = []
    for d in sorted(per_day):
        kwh = math.fsum(per_day[d]) / 3600.0 / 1000.0
        out.append(DailyEnergy(d, d % 7, kwh, kwh * tariff))
    return out


def weekend_ratio(days: Sequence[DailyEnergy]) -> float:
    """Mean weekend-day energy over mean working-day energy (NaN if either is missing)."""
    we = [d.kwh for d in days if d.weekday >= 5]
    wd = [d.kwh for d in days if d.weekday < 5]
    if not we or not wd or np.mean(wd) == 0:
        return float("nan")
    return float(np.mean(we) / np.mean(wd))


@dataclass(frozen=True)
class ReductionPotential:
    closing_avg_w: float
    reducible_to_w: float
    interruptible_share: float


def reduction_potential(lines: Mapping[str, ConsumptionTrace], interruptible: Mapping[str, bool],
                        schedule: ClosingSchedule) -> ReductionPotential:
    """Closing-hours load left once every interruptible line is switched off."""
    if not lines:
        raise AuditError("reduction potential needs at least one line")
    missing = [k for k in lines if k not in interruptible]
    if missing:
        raise AuditError(f"lines without an interruptible flag: {missing}")
    avg = {k: closing_hours_average(t, schedule) for k, t in lines.items()}
    total = math.fsum(avg.values())
    kept = math.fsum(v for k, v in avg.items() if not interruptible[k])
    share = 1.0 - kept / total if total > 0 else 0.0
    return ReductionPotential(total, kept, share)


# --- report ------------------------------------------------------------------

@dataclass
class AuditReport:
    days: List[DailyEnergy]
    tariff: float
    weekend_ratio: float
    baseline_w: float
    closing_avg_w: float
    reducible_to_w: float
    interruptible_share: float

    def write_csv(self, fh: TextIO) -> None:
        fh.write("day,weekday,kwh,cost\n")
        for d in self.days:
            fh.write(f"{d.day},{WEEKDAYS[d.weekday]},{d.kwh:.6f},{d.cost:.6f}\n")

    def summary(self) -> str:
        week_kwh = sum(d.kwh for d in self.days)
        lines = [
            f"days analysed       {len(self.days)}",
            f"energy              {week_kwh:.3f} kWh",
            f"cost                {week_kwh * self.tariff:.2f} (tariff {self.tariff:.2f} per kWh)",
            f"weekend/weekday     {self.weekend_ratio:.3f}",
            f"baseline            {self.baseline_w:.1f} W",
            f"closing-hours mean  {self.closing_avg_w:.1f} W",
            f"reducible to        {self.reducible_to_w:.1f} W",
            f"interruptible share {self.interruptible_share:.3f}",
        ]
        return "\n".join(lines) + "\n"

    def save(self, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "audit.csv", "summary": out / "audit.txt"}
        with open(paths["report"], "w", newline="") as fh:
            self.write_csv(fh)
        paths["summary"].write_text(self.summary())
        return paths


def audit(lines: Mapping[str, ConsumptionTrace], schedule: ClosingSchedule,
          interruptible: Optional[Mapping[str, bool]] = None,
          tariff: float = DEFAULT_TARIFF) -> AuditReport:
    """Full report over the summed lines; lines without a flag count as non-interruptible."""
    if not lines:
        raise AuditError("audit needs at least one line")
    flags = {k: bool((interruptible or {}).get(k, False)) for k in lines}
    total = ConsumptionTrace.total(list(lines.values()))
    days = weekly_profile(total, tariff)
    red = reduction_potential(lines, flags, schedule)
    return AuditReport(days, tariff, weekend_ratio(days), baseline(total),
                       closing_hours_average(total, schedule), red.reducible_to_w,
                       red.interruptible_share)


def read_lines(path) -> Dict[str, ConsumptionTrace]:
    """Per-line traces from a gateway history CSV or an outlet trace CSV.

    Both formats only record changes, so every line holds its last value up
    to the latest timestamp in the file.
    """
    rows: Dict[str, List[Tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        if {"time_s", "channel", "active_w"} <= cols:
            key, val = "channel", "active_w"
        elif {"time_s", "outlet_id", "watts"} <= cols:
            key, val = "outlet_id", "watts"
        else:
            raise AuditError(f"{path}: expected a gateway history or outlet trace header")
        for row in reader:
            rows.setdefault(row[key], []).append((float(row["time_s"]), float(row[val])))
    if not rows:
        raise AuditError(f"{path}: no samples")
    end = max(s[0] for samples in rows.values() for s in samples)
    out = {}
    for name, samples in rows.items():
        samples.sort()
        t = np.array([s[0] for s in samples])
        w = np.array([s[1] for s in samples])
        # several frames in one instant: the last one wins
        keep = np.append(np.diff(t) > 0, True)
        out[name] = ConsumptionTrace(t[keep], w[keep], end, name)
    return out
