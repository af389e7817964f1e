"""Scenario driver: decisions, relay actuation over the bus, energy-lack detection and accounting.

Time advances through sub-intervals bounded by trace steps, decision epochs
and bus events, so relay switching lands at its exact delivery time while
the loads stay piecewise constant on the trace grid.

Measurement staleness is modelled directly: the decision at epoch ``t`` sees
the true loads at ``t - L_monitor`` (the worst-case snapshot age). Relay
commands travel over the emulated bus as controlOut frames.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from sklearn.base import clone

from ..bus import Bus, BusTiming, EventLoop
from ..gateway import Gateway
from ..inverter import Inverter, InverterState
from ..meter import MeterUnit
from ..policy import (
    OutletAssignment,
    SwitchingPolicy,
    has_fixed_margin,
    policy_name,
    with_margin,
)
from ..slotstats import SlotStatistics
from .scenario import Scenario

log = logging.getLogger(__name__)

# relay channel offset: channels 0-3 feed the loads, 4-7 select their source
SOURCE_CHANNEL_OFFSET = 4
EPS_W = 1e-9


@dataclass(frozen=True)
class EnergyLackEvent:
    time: float
    pv_demand_w: float
    available_w: float


@dataclass
class MetricsReport:
    policy: str
    margin: Optional[float]
    slots: int
    total_consumption_wh: float = 0.0
    total_production_wh: float = 0.0
    self_consumed_wh: float = 0.0
    grid_served_wh: float = 0.0
    error_count: int = 0
    switch_count: int = 0
    decisions: int = 0

    @property
    def saving_percent(self) -> float:
        if self.total_consumption_wh <= 0:
            return 0.0
        return 100.0 * self.self_consumed_wh / self.total_consumption_wh

    @property
    def saving_percent_of_production(self) -> float:
        if self.total_production_wh <= 0:
            return 0.0
        return 100.0 * self.self_consumed_wh / self.total_production_wh

    @property
    def margin_label(self) -> str:
        return "adaptive" if self.margin is None else f"{self.margin:g}"

    def csv_row(self) -> str:
        return (f"{self.margin_label},{self.policy},{self.slots},{self.saving_percent:.4f},"
                f"{self.error_count},{self.switch_count}")

    def summary(self) -> str:
        return "\n".join([
            f"policy            {self.policy} (margin {self.margin_label}, {self.slots} slots)",
            f"consumption       {self.total_consumption_wh:.2f} Wh",
            f"PV production     {self.total_production_wh:.2f} Wh",
            f"self-consumed     {self.self_consumed_wh:.2f} Wh",
            f"grid-served       {self.grid_served_wh:.2f} Wh",
            f"saving            {self.saving_percent:.2f} % of consumption (headline)",
            f"                  {self.saving_percent_of_production:.2f} % of production",
            f"energy lacks      {self.error_count}",
            f"relay switches    {self.switch_count}",
            f"decisions         {self.decisions}",
        ])


REPORT_HEADER = "margin,policy,slots,saving_percent,error_count,switch_count"


@dataclass
class RunResult:
    report: MetricsReport
    lacks: List[EnergyLackEvent]
    bus: Bus
    gateway: Gateway
    stats: SlotStatistics
    assignments: List[OutletAssignment] = field(default_factory=list)

    def write_event_log(self, fh: TextIO) -> None:
        self.bus.write_log(fh)

    def write_lacks(self, fh: TextIO) -> None:
        fh.write("time_s,pv_demand_w,available_w\n")
        for e in self.lacks:
            fh.write(f"{e.time:.6f},{e.pv_demand_w:.3f},{e.available_w:.3f}\n")

    def save(self, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "report.csv", "summary": out / "summary.txt",
                 "events": out / "events.csv", "lacks": out / "lacks.csv"}
        with open(paths["report"], "w", newline="") as fh:
            fh.write(REPORT_HEADER + "\n" + self.report.csv_row() + "\n")
        with open(paths["summary"], "w") as fh:
            fh.write(self.report.summary() + "\n")
        with open(paths["events"], "w", newline="") as fh:
            self.write_event_log(fh)
        with open(paths["lacks"], "w", newline="") as fh:
            self.write_lacks(fh)
        return paths


def warmup_statistics(scenario: Scenario) -> SlotStatistics:
    """Slot statistics from the warm-up days that precede the measured period."""
    tr = scenario.traces
    stats = SlotStatistics(slots_per_day=scenario.slots_per_day, n_outlets=tr.n_outlets)
    n = tr.index(scenario.start_time) if scenario.warmup_days else 0
    stats.partial_fit_series(tr.t0, tr.dt, tr.outlets[:, :n])
    return stats


class _Run:
    def __init__(self, scenario: Scenario, policy: SwitchingPolicy, stats: SlotStatistics):
        self.sc = scenario
        self.policy = policy
        self.stats = stats
        policy.set_stats(stats)
        tr = scenario.traces
        self.dt = tr.dt
        self.t_start = scenario.start_time
        self.t_end = self.t_start + scenario.duration_s
        self.j0 = tr.index(self.t_start)
        self.loads = tr.outlets
        self.rows = tr.outlets.T.tolist()
        self.dc = tr.pv_dc.tolist()
        self.n = tr.n_outlets

        self.inverter = Inverter(scenario.inverter, state=InverterState())
        self.loop = EventLoop(self.t_start)
        self.bus = Bus(self.loop, BusTiming(), propagation_delay=scenario.delays.L_p)
        per = scenario.outlets_per_meter
        self.where: Dict[int, Tuple[int, int]] = {}
        self.outlet_of: Dict[Tuple[int, int], int] = {}
        self.meters: List[MeterUnit] = []
        for o in range(self.n):
            addr = 1 + o // per
            if len(self.meters) < addr:
                self.meters.append(MeterUnit(addr, scenario.notify_mode))
            m = self.meters[addr - 1]
            feed = o % per
            m.control_out(feed, True)  # loads stay fed; not on the bus yet
            self.where[o] = (addr, feed + SOURCE_CHANNEL_OFFSET)
            self.outlet_of[self.where[o]] = o
        self.gateway = Gateway(self.bus, known_addresses=[m.address for m in self.meters])
        for m in self.meters:
            m.relay_listener = self._on_relay
            m.attach(self.bus)

        self.pv: set = set()  # physical: outlets whose source relay points at the inverter
        self.report = MetricsReport(policy_name(policy),
                                    policy.margin if has_fixed_margin(policy) else None,
                                    scenario.slots_per_day)
        self.lacks: List[EnergyLackEvent] = []
        self.assignments: List[OutletAssignment] = []
        self.lack_start: Optional[float] = None
        self.bypass_until = -math.inf
        self.prev = OutletAssignment.all_grid(range(self.n), self.t_start)
        self.stats_upto = self.j0

    def _on_relay(self, address: int, index: int, on: bool, time: float) -> None:
        o = self.outlet_of.get((address, index))
        if o is None:
            return
        self.report.switch_count += 1
        if on:
            self.pv.add(o)
        else:
            self.pv.discard(o)

    # -- decisions --

    def _update_stats(self, j_now: int) -> None:
        if j_now > self.stats_upto:
            tr = self.sc.traces
            self.stats.partial_fit_series(tr.t0 + self.stats_upto * self.dt, self.dt,
                                          self.loads[:, self.stats_upto:j_now])
            self.stats_upto = j_now

    def _decide(self, t: float) -> None:
        sc = self.sc
        tr = sc.traces
        j = tr.index(t)
        self._update_stats(j)
        snap = tr.index(t - sc.delays.L_monitor)
        readings = {o: float(self.loads[o, snap]) for o in range(self.n)}
        production = self.inverter.available(self.dc[j])
        a = self.policy.decide(production, readings, t, self.prev)
        self.prev = a
        self.assignments.append(a)
        self.report.decisions += 1
        current = set(self.pv)
        # removals first: every intermediate relay state is a subset of old or new
        for o in sorted(current - a.pv_set):
            self.gateway.control(*self.where[o], False)
        for o in sorted(a.pv_set - current):
            self.gateway.control(*self.where[o], True)

    def _protect(self, t: float, demand: float, avail: float) -> None:
        """Energy lack confirmed: inverter falls back to grid, relays are reset."""
        self.lacks.append(EnergyLackEvent(self.lack_start, demand, avail))
        self.report.error_count += 1
        self.lack_start = None
        self.bypass_until = t + self.sc.cooldown_s
        for o in sorted(self.pv):
            self.gateway.control(*self.where[o], False, request_time=t)
        self.prev = OutletAssignment.all_grid(range(self.n), t)

    # -- accounting --

    def _account(self, a: float, b: float, j: int, pv_demand: float, on_pv: bool) -> None:
        if b <= a:
            return
        span = b - a
        hours = span / 3600.0
        rep = self.report
        total = sum(self.rows[j])
        rep.total_consumption_wh += total * hours
        dc = self.dc[j]
        rep.total_production_wh += self.inverter.solar_ac(dc) * hours
        step = self.inverter.step(span, pv_demand if on_pv else 0.0, dc)
        served = step.served_by_solar + step.served_by_battery
        rep.self_consumed_wh += served
        rep.grid_served_wh += total * hours - served

    def run(self) -> RunResult:
        sc = self.sc
        period = sc.decision_period_s
        tol = sc.overload_tolerance_s
        k = 0
        t = self.t_start
        while t < self.t_end - 1e-12:
            epoch = self.t_start + k * period
            if t >= epoch - 1e-12:
                if t >= self.bypass_until:
                    self._decide(t)
                k += 1
                continue
            j = sc.traces.index(t)
            step_end = sc.traces.t0 + (j + 1) * self.dt
            nxt = self.loop.peek()
            b = min(step_end, epoch, self.t_end, nxt if nxt is not None else math.inf)
            if b <= t:  # bus event due now
                self.loop.run_until(t)
                continue
            row = self.rows[j]
            demand = sum(row[o] for o in self.pv)
            bypass = t < self.bypass_until
            if bypass:
                b = min(b, self.bypass_until)
            avail = self.inverter.available(self.dc[j])
            lacking = not bypass and self.pv and demand > avail + EPS_W
            if lacking:
                if self.lack_start is None:
                    self.lack_start = t
                detect = self.lack_start + tol
                if detect < b:
                    self._account(t, detect, j, 0.0, False)
                    self._protect(detect, demand, avail)
                    t = detect
                    continue
                self._account(t, b, j, 0.0, False)
            else:
                self.lack_start = None
                self._account(t, b, j, demand, not bypass)
            t = b
            self.loop.run_until(t)
        self.loop.run_until(self.t_end)
        self._update_stats(sc.traces.index(self.t_end - 1e-9) + 1)
        return RunResult(self.report, self.lacks, self.bus, self.gateway, self.stats,
                         self.assignments)


def run(scenario: Scenario, policy: Optional[SwitchingPolicy] = None,
        stats: Optional[SlotStatistics] = None) -> RunResult:
    """Simulate the measured period of ``scenario``; ``policy`` overrides the scenario's."""
    policy = clone(scenario.policy if policy is None else policy)
    stats = warmup_statistics(scenario) if stats is None else copy.deepcopy(stats)
    return _Run(scenario, policy, stats).run()


@dataclass(frozen=True)
class SweepRow:
    margin: float
    report: MetricsReport

    @property
    def saving_percent(self) -> float:
        return self.report.saving_percent

    @property
    def error_count(self) -> int:
        return self.report.error_count


def sweep(scenario: Scenario, margins: Sequence[float],
          policy: Optional[SwitchingPolicy] = None) -> List[SweepRow]:
    """One run per margin on identical traces; rows ordered by margin."""
    base = scenario.policy if policy is None else policy
    for m in margins:
        if not 0 <= m < 1:
            raise ValueError(f"margin must be in [0, 1), got {m}")
    stats = warmup_statistics(scenario)
    rows = []
    for m in sorted(margins):
        res = run(scenario, with_margin(base, m), stats)
        rows.append(SweepRow(m, res.report))
    return rows


def write_sweep(rows: Sequence[SweepRow], fh: TextIO) -> None:
    fh.write(REPORT_HEADER + "\n")
    for r in rows:
        fh.write(r.report.csv_row() + "\n")
