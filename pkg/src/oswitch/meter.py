"""Emulated meter unit: 8 relay outputs with per-channel metering and 16 dry-contact inputs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

from .bus import (
    GATEWAY_ADDRESS,
    Bus,
    BusFrame,
    ChannelKind,
    CommandOp,
    FrameKind,
    command_frame,
    measure_frame,
    parse_payload,
    state_frame,
)
from .electrical import ZERO_SAMPLE, MeasureSample, sample_from_active

log = logging.getLogger(__name__)

N_OUTPUTS = 8
N_INPUTS = 16
MAX_CURRENT = 16.0


class ChannelTripped(RuntimeError):
    pass


# --- notification modes ----------------------------------------------------

@dataclass(frozen=True)
class Interval:
    period: float

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be > 0")


@dataclass(frozen=True)
class AbsoluteDelta:
    threshold: float

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")


@dataclass(frozen=True)
class PercentDelta:
    percent: float

    def __post_init__(self):
        if not 0 < self.percent <= 100:
            raise ValueError("percent must be in (0, 100]")


NotificationMode = Union[Interval, AbsoluteDelta, PercentDelta]


def parse_mode(spec: dict) -> NotificationMode:
    """Build a mode from a config block like ``{"mode": "absolute", "threshold": 5}``."""
    kind = spec.get("mode", "interval")
    if kind == "interval":
        return Interval(float(spec.get("period", 1.0)))
    if kind == "absolute":
        return AbsoluteDelta(float(spec["threshold"]))
    if kind == "percent":
        return PercentDelta(float(spec["percent"]))
    raise ValueError(f"unknown notification mode {kind!r}")


def _fields(s: MeasureSample):
    return (s.apparent_power, s.power_factor, s.current)


def should_notify(mode: NotificationMode, last_sent: MeasureSample, new: MeasureSample,
                  last_emit: Optional[float], now: float) -> bool:
    if isinstance(mode, Interval):
        return last_emit is None or now - last_emit >= mode.period
    if isinstance(mode, AbsoluteDelta):
        return any(abs(n - o) > mode.threshold for n, o in zip(_fields(new), _fields(last_sent)))
    frac = mode.percent / 100.0
    for n, o in zip(_fields(new), _fields(last_sent)):
        if o == 0:
            if n != 0:
                return True
        elif abs(n - o) > frac * abs(o):
            return True
    return False


# --- channels --------------------------------------------------------------

@dataclass
class AveragingAccumulator:
    sum_p: float = 0.0
    sum_pf: float = 0.0
    sum_c: float = 0.0
    count: int = 0
    window_start: float = 0.0

    def add(self, s: MeasureSample) -> None:
        self.sum_p += s.apparent_power
        self.sum_pf += s.power_factor
        self.sum_c += s.current
        self.count += 1

    def mean(self) -> MeasureSample:
        n = self.count
        return MeasureSample(self.sum_p / n, min(self.sum_pf / n, 1.0), self.sum_c / n)

    def reset(self, now: float) -> None:
        self.sum_p = self.sum_pf = self.sum_c = 0.0
        self.count = 0
        self.window_start = now


LoadSource = Callable[[float], Union[float, MeasureSample]]


@dataclass
class OutputChannel:
    index: int
    relay_on: bool = False
    tripped: bool = False
    sample: MeasureSample = ZERO_SAMPLE
    last_sent: MeasureSample = ZERO_SAMPLE
    last_emit: Optional[float] = None
    accumulator: AveragingAccumulator = field(default_factory=AveragingAccumulator)
    max_current: float = MAX_CURRENT
    load: Optional[LoadSource] = field(default=None, repr=False)


@dataclass
class InputChannel:
    index: int
    state: bool = False


@dataclass(frozen=True)
class TripEvent:
    time: float
    address: int
    channel: int
    current: float


class MeterUnit:
    """One meter on the bus.

    Frames produced by an operation are returned to the caller and, when the
    unit is attached to a bus, also transmitted (to the gateway by default).
    """

    def __init__(self, address: int, notify_mode: NotificationMode = Interval(1.0),
                 self_draw: float = 2.0):
        if address == GATEWAY_ADDRESS:
            raise ValueError("address 0 is reserved for the gateway")
        self.address = address
        self.notify_mode = notify_mode
        self.self_draw = self_draw
        self.outputs = [OutputChannel(i) for i in range(N_OUTPUTS)]
        self.inputs = [InputChannel(i) for i in range(N_INPUTS)]
        self.trips: List[TripEvent] = []
        self.bus: Optional[Bus] = None
        # called as listener(address, index, on, time) on every physical relay change
        self.relay_listener: Optional[Callable[[int, int, bool, float], None]] = None

    # -- bus wiring --

    def attach(self, bus: Bus) -> None:
        bus.attach(self.address, self._on_frame)
        self.bus = bus

    def _now(self) -> float:
        return self.bus.loop.now if self.bus is not None else 0.0

    def _notify_relay(self, index: int, on: bool, now: Optional[float]) -> None:
        if self.relay_listener is not None:
            self.relay_listener(self.address, index, on, self._now() if now is None else now)

    def _send(self, frame: Optional[BusFrame]) -> Optional[BusFrame]:
        if frame is not None and self.bus is not None:
            self.bus.transmit(frame)
        return frame

    def _on_frame(self, frame: BusFrame, time: float) -> None:
        reply_to = frame.sender
        try:
            if frame.kind is FrameKind.COMMAND:
                cmd = parse_payload(frame)
                if cmd.op is CommandOp.CONTROL_OUT:
                    self.control_out(cmd.channel, cmd.value, now=time)
                else:
                    kind = ChannelKind.OUT if cmd.op is CommandOp.READ_OUT_STATE else ChannelKind.IN
                    state = self.read_state(kind, cmd.channel)
                    self._send(state_frame(FrameKind.STATE_REPLY, self.address, reply_to,
                                           kind, cmd.channel, state))
            elif frame.kind is FrameKind.MEASURE_REQUEST:
                ch = parse_payload(frame)
                self._send(measure_frame(FrameKind.MEASURE_REPLY, self.address, reply_to, ch,
                                         self.read_measures(ch)))
            elif frame.kind is FrameKind.AVG_MEASURE_REQUEST:
                ch = parse_payload(frame)
                self._send(measure_frame(FrameKind.MEASURE_REPLY, self.address, reply_to, ch,
                                         self.read_avg_measures(ch, now=time)))
        except (IndexError, ChannelTripped) as exc:
            log.warning("meter %d rejected %s: %s", self.address, frame.kind.label, exc)

    # -- primitives --

    def _out(self, index: int) -> OutputChannel:
        if not 0 <= index < N_OUTPUTS:
            raise IndexError(f"output index {index} out of range 0..{N_OUTPUTS - 1}")
        return self.outputs[index]

    def _in(self, index: int) -> InputChannel:
        if not 0 <= index < N_INPUTS:
            raise IndexError(f"input index {index} out of range 0..{N_INPUTS - 1}")
        return self.inputs[index]

    def control_out(self, index: int, on: bool, now: Optional[float] = None) -> Optional[BusFrame]:
        """Switch an output; returns the outVariation frame, or None if nothing changed."""
        ch = self._out(index)
        on = bool(on)
        if ch.tripped and on:
            ch.tripped = False
        elif ch.relay_on == on:
            return None
        ch.relay_on = on
        if not on:
            ch.sample = ZERO_SAMPLE
        self._notify_relay(index, on, now)
        return self._send(state_frame(FrameKind.OUT_VARIATION, self.address, GATEWAY_ADDRESS,
                                      ChannelKind.OUT, index, on))

    def set_input(self, index: int, state: bool) -> Optional[BusFrame]:
        ch = self._in(index)
        if ch.state == bool(state):
            return None
        ch.state = bool(state)
        return self._send(state_frame(FrameKind.IN_VARIATION, self.address, GATEWAY_ADDRESS,
                                      ChannelKind.IN, index, ch.state))

    def read_state(self, kind: ChannelKind, index: int) -> bool:
        if ChannelKind(kind) is ChannelKind.OUT:
            return self._out(index).relay_on
        return self._in(index).state

    def read_measures(self, index: int) -> MeasureSample:
        ch = self._out(index)
        if ch.tripped:
            raise ChannelTripped(f"channel {index} of meter {self.address} is tripped")
        return ch.sample if ch.relay_on else ZERO_SAMPLE

    def read_avg_measures(self, index: int, now: Optional[float] = None) -> MeasureSample:
        ch = self._out(index)
        now = self._now() if now is None else now
        if ch.accumulator.count == 0:
            out = self.read_measures(index)
        else:
            out = ch.accumulator.mean()
        ch.accumulator.reset(now)
        return out

    # -- sampling --

    def bind_load(self, index: int, load: LoadSource) -> None:
        self._out(index).load = load

    def trip_check(self, index: int, current: float, now: float) -> Optional[TripEvent]:
        ch = self._out(index)
        if not ch.relay_on or current <= ch.max_current:
            return None
        ch.relay_on = False
        ch.tripped = True
        ch.sample = ZERO_SAMPLE
        self._notify_relay(index, False, now)
        event = TripEvent(now, self.address, index, current)
        self.trips.append(event)
        log.warning("meter %d channel %d tripped at %.1f A", self.address, index, current)
        self._send(state_frame(FrameKind.OUT_VARIATION, self.address, GATEWAY_ADDRESS,
                               ChannelKind.OUT, index, False))
        return event

    def evaluate_notification(self, index: int, new_sample: MeasureSample,
                              now: float) -> Optional[BusFrame]:
        ch = self._out(index)
        if not should_notify(self.notify_mode, ch.last_sent, new_sample, ch.last_emit, now):
            return None
        ch.last_sent = new_sample
        ch.last_emit = now
        return self._send(measure_frame(FrameKind.POWER_VARIATION, self.address, GATEWAY_ADDRESS,
                                        index, new_sample))

    def sample(self, index: int, reading: Union[float, MeasureSample],
               now: float) -> Optional[BusFrame]:
        """Feed one instantaneous reading into channel ``index``."""
        ch = self._out(index)
        if not ch.relay_on:
            return None
        if not isinstance(reading, MeasureSample):
            reading = sample_from_active(float(reading))
        if self.trip_check(index, reading.current, now) is not None:
            return None
        ch.sample = reading
        ch.accumulator.add(reading)
        return self.evaluate_notification(index, reading, now)

    def tick(self, now: float) -> List[BusFrame]:
        """Sample every bound load at ``now``."""
        frames = []
        for ch in self.outputs:
            if ch.load is not None:
                f = self.sample(ch.index, ch.load(now), now)
                if f is not None:
                    frames.append(f)
        return frames

    # -- latching relays across power loss --

    def to_dict(self) -> Dict:
        return {"address": self.address,
                "relays": [ch.relay_on for ch in self.outputs],
                "tripped": [ch.tripped for ch in self.outputs]}

    def power_loss(self) -> None:
        """Drop volatile state; latching relays keep their contacts."""
        for ch in self.outputs:
            ch.sample = ZERO_SAMPLE
            ch.last_sent = ZERO_SAMPLE
            ch.last_emit = None
            ch.accumulator.reset(0.0)
        for ch in self.inputs:
            ch.state = False

    @classmethod
    def from_dict(cls, state: Dict, notify_mode: NotificationMode = Interval(1.0)) -> "MeterUnit":
        unit = cls(state["address"], notify_mode)
        for ch, on, tripped in zip(unit.outputs, state["relays"], state["tripped"]):
            ch.relay_on = bool(on)
            ch.tripped = bool(tripped)
        return unit


def control_command(sender: int, unit_address: int, index: int, on: bool) -> BusFrame:
    return command_frame(sender, unit_address, CommandOp.CONTROL_OUT, index, on)
