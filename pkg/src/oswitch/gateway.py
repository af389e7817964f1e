"""Gateway node: supervises all bus traffic, mirrors device state and keeps measurement history."""

from __future__ import annotations

import bisect
import csv
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, TextIO, Tuple

from .bus import (
    GATEWAY_ADDRESS,
    Bus,
    BusFrame,
    ChannelKind,
    CommandOp,
    FrameKind,
    MeasurePayload,
    StatePayload,
    command_frame,
    parse_payload,
)
from .electrical import NOMINAL_VOLTAGE, DerivedMeasures, MeasureSample, derive_measures

log = logging.getLogger(__name__)

ChannelKey = Tuple[int, int]


class UnknownDevice(KeyError):
    pass


class DeviceKindError(ValueError):
    pass


@dataclass(frozen=True)
class Device:
    name: str
    address: int
    channel: int
    kind: ChannelKind
    interruptible: bool = False


class DeviceRegistry:
    def __init__(self, devices: Iterable[Device] = ()):
        self._by_name: Dict[str, Device] = {}
        for d in devices:
            self.add(d)

    def add(self, device: Device) -> None:
        if device.name in self._by_name:
            raise ValueError(f"duplicate device name {device.name!r}")
        self._by_name[device.name] = device

    def __getitem__(self, name: str) -> Device:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownDevice(name) from None

    def __contains__(self, name) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self._by_name.values())

    def __len__(self):
        return len(self._by_name)

    def addresses(self) -> set:
        return {d.address for d in self}

    def interruptible_flags(self) -> Dict[str, bool]:
        return {d.name: d.interruptible for d in self}

    def lookup(self, key: str) -> Optional[Device]:
        """Find a device by logical name or by an ``address.channel`` key."""
        if key in self._by_name:
            return self._by_name[key]
        for d in self:
            if f"{d.address}.{d.channel}" == key:
                return d
        return None

    @classmethod
    def read(cls, path) -> "DeviceRegistry":
        reg = cls()
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0].strip() == "name":
                    continue
                name, address, channel, kind, interruptible = (c.strip() for c in row)
                kind_l = kind.lower()
                if kind_l not in ("in", "out"):
                    raise ValueError(f"registry kind must be in|out, got {kind!r}")
                if interruptible not in ("0", "1"):
                    raise ValueError(f"interruptible must be 0|1, got {interruptible!r}")
                reg.add(Device(name, int(address), int(channel),
                               ChannelKind.IN if kind_l == "in" else ChannelKind.OUT,
                               interruptible == "1"))
        return reg

    def write(self, fh: TextIO) -> None:
        for d in self:
            fh.write(f"{d.name},{d.address},{d.channel},{d.kind.name.lower()},"
                     f"{int(d.interruptible)}\n")


@dataclass(frozen=True)
class HistoryRow:
    time: float
    sample: MeasureSample
    derived: DerivedMeasures


@dataclass(frozen=True)
class HistoryBucket:
    time: float
    active_power: float
    apparent_power: float
    power_factor: float


class Gateway:
    """Promiscuous bus node acting as both supervisor and controller."""

    def __init__(self, bus: Bus, registry: Optional[DeviceRegistry] = None,
                 address: int = GATEWAY_ADDRESS, known_addresses: Optional[Iterable[int]] = None):
        self.bus = bus
        self.address = address
        self.registry = registry if registry is not None else DeviceRegistry()
        self.known_addresses = set(known_addresses or ()) | self.registry.addresses()
        self.out_state: Dict[ChannelKey, bool] = {}
        self.in_state: Dict[ChannelKey, bool] = {}
        self.history: Dict[ChannelKey, List[HistoryRow]] = {}
        self.raw_log: List[Tuple[float, BusFrame]] = []
        self.warnings: List[str] = []
        self._subscribers: List[Callable[[str, ChannelKey, object, float], None]] = []
        self._lock = threading.RLock()
        bus.attach(address, self.handle_frame, promiscuous=True)

    def subscribe(self, callback: Callable[[str, ChannelKey, object, float], None]) -> None:
        """Register a push callback ``callback(event, (address, channel), value, time)``."""
        self._subscribers.append(callback)

    def _push(self, event: str, key: ChannelKey, value, time: float) -> None:
        for cb in self._subscribers:
            cb(event, key, value, time)

    def handle_frame(self, frame: BusFrame, time: float) -> None:
        with self._lock:
            self.raw_log.append((time, frame))
            if frame.sender == self.address:
                return
            if frame.sender not in self.known_addresses:
                msg = f"frame from unregistered address {frame.sender} ({frame.kind.label})"
                self.warnings.append(msg)
                log.warning(msg)
                return
            key_state = None
            if frame.kind in (FrameKind.OUT_VARIATION, FrameKind.IN_VARIATION, FrameKind.STATE_REPLY):
                p: StatePayload = parse_payload(frame)
                key_state = (frame.sender, p.channel)
                target = self.out_state if p.channel_kind is ChannelKind.OUT else self.in_state
                target[key_state] = p.state
                event = "out" if p.channel_kind is ChannelKind.OUT else "in"
                self._push(event, key_state, p.state, time)
            elif frame.kind in (FrameKind.POWER_VARIATION, FrameKind.MEASURE_REPLY):
                m: MeasurePayload = parse_payload(frame)
                key = (frame.sender, m.channel)
                self._append(key, time, m.sample)
                self._push("measure", key, m.sample, time)

    def _append(self, key: ChannelKey, time: float, sample: MeasureSample) -> None:
        derived = derive_measures(sample, nominal_voltage=NOMINAL_VOLTAGE)
        rows = self.history.setdefault(key, [])
        row = HistoryRow(time, sample, derived)
        if rows and rows[-1].time >= time:
            # same-instant reading supersedes the previous one
            rows[-1] = row
        else:
            rows.append(row)

    # -- controller side --

    def send_command(self, name: str, on: bool) -> BusFrame:
        dev = self.registry[name]
        if dev.kind is not ChannelKind.OUT:
            raise DeviceKindError(f"{name!r} is an input channel")
        return self.control(dev.address, dev.channel, on)

    def control(self, address: int, channel: int, on: bool,
                request_time: Optional[float] = None) -> BusFrame:
        frame = command_frame(self.address, address, CommandOp.CONTROL_OUT, channel, on)
        self.bus.transmit(frame, request_time)
        return frame

    def state(self, name: str) -> Optional[bool]:
        dev = self.registry[name]
        table = self.out_state if dev.kind is ChannelKind.OUT else self.in_state
        with self._lock:
            return table.get((dev.address, dev.channel))

    # -- queries --

    def latest(self, key: ChannelKey) -> Optional[HistoryRow]:
        with self._lock:
            rows = self.history.get(key)
            return rows[-1] if rows else None

    def query_history(self, name: str, t0: float, t1: float,
                      resolution: float) -> List[HistoryBucket]:
        """Time-weighted bucket means with the last observation carried forward."""
        if not t0 < t1:
            raise ValueError(f"empty query range [{t0}, {t1})")
        if resolution <= 0:
            raise ValueError("resolution must be > 0")
        dev = self.registry[name]
        with self._lock:
            rows = list(self.history.get((dev.address, dev.channel), ()))
        times = [r.time for r in rows]
        out = []
        start = t0
        while start < t1:
            end = min(start + resolution, t1)
            # value in force at `start`, then every change inside the bucket
            i = bisect.bisect_right(times, start) - 1
            acc_pa = acc_p = acc_pf = 0.0
            t = start
            while t < end:
                j = i + 1
                nxt = min(times[j], end) if j < len(times) else end
                if i >= 0:
                    r = rows[i]
                    w = nxt - t
                    acc_pa += r.derived.active_power * w
                    acc_p += r.sample.apparent_power * w
                    acc_pf += r.sample.power_factor * w
                t = nxt
                i = j
            width = end - start
            out.append(HistoryBucket(start, acc_pa / width, acc_p / width, acc_pf / width))
            start = end
        return out

    def write_history(self, fh: TextIO) -> None:
        fh.write("time_s,channel,apparent_va,power_factor,current_a,active_w,reactive_var\n")
        with self._lock:
            rows = sorted(((r.time, key, r) for key, rs in self.history.items() for r in rs),
                          key=lambda x: (x[0], x[1]))
        for t, (addr, ch), r in rows:
            fh.write(f"{t:.6f},{addr}.{ch},{r.sample.apparent_power:.2f},{r.sample.power_factor:.2f},"
                     f"{r.sample.current:.2f},{r.derived.active_power:.4f},"
                     f"{r.derived.reactive_power:.4f}\n")

    def save_history(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            self.write_history(fh)
