"""Shared 9600-baud serial bus carrying addressed frames between meters and the gateway.

Every attached node perceives every frame; a node processes it only when it
is the recipient, except promiscuous nodes (the gateway) which process all.
Transmissions are serialized FIFO on the single medium.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, TextIO, Tuple

from .electrical import MeasureSample

GATEWAY_ADDRESS = 0
HEADER_BYTES = 4
DEFAULT_MAX_PAYLOAD = 64


class BusError(RuntimeError):
    pass


class FrameKind(enum.IntEnum):
    COMMAND = 1
    STATE_REPLY = 2
    MEASURE_REPLY = 3
    IN_VARIATION = 4
    OUT_VARIATION = 5
    POWER_VARIATION = 6
    MEASURE_REQUEST = 7
    AVG_MEASURE_REQUEST = 8

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


class CommandOp(enum.IntEnum):
    CONTROL_OUT = 0
    READ_OUT_STATE = 1
    READ_IN_STATE = 2


class ChannelKind(enum.IntEnum):
    IN = 0
    OUT = 1


@dataclass(frozen=True)
class BusFrame:
    sender: int
    recipient: int
    kind: FrameKind
    payload: bytes = b""

    @property
    def size_bytes(self) -> int:
        return HEADER_BYTES + len(self.payload)

    def encode(self) -> bytes:
        return bytes([self.sender, self.recipient, int(self.kind), len(self.payload)]) + self.payload

    @classmethod
    def decode(cls, raw: bytes) -> "BusFrame":
        if len(raw) < HEADER_BYTES:
            raise BusError("truncated frame header")
        sender, recipient, kind, length = raw[:HEADER_BYTES]
        payload = raw[HEADER_BYTES:]
        if len(payload) != length:
            raise BusError(f"payload length mismatch: header says {length}, got {len(payload)}")
        return cls(sender, recipient, FrameKind(kind), bytes(payload))


# --- payload codecs --------------------------------------------------------
# Wire quantization: P to 1 VA, PF to 0.01, current to 0.01 A.

_MEASURE = struct.Struct(">BHBH")


class CommandPayload(NamedTuple):
    op: CommandOp
    channel: int
    value: bool


class StatePayload(NamedTuple):
    channel_kind: ChannelKind
    channel: int
    state: bool


class MeasurePayload(NamedTuple):
    channel: int
    sample: MeasureSample


def quantize(sample: MeasureSample) -> MeasureSample:
    return MeasureSample(
        float(min(round(sample.apparent_power), 0xFFFF)),
        round(sample.power_factor * 100) / 100,
        min(round(sample.current * 100), 0xFFFF) / 100,
    )


def command_frame(sender: int, recipient: int, op: CommandOp, channel: int,
                  value: bool = False) -> BusFrame:
    return BusFrame(sender, recipient, FrameKind.COMMAND, bytes([int(op), channel, int(bool(value))]))


def state_frame(kind: FrameKind, sender: int, recipient: int, channel_kind: ChannelKind,
                channel: int, state: bool) -> BusFrame:
    if kind in (FrameKind.IN_VARIATION, FrameKind.OUT_VARIATION):
        return BusFrame(sender, recipient, kind, bytes([channel, int(bool(state))]))
    return BusFrame(sender, recipient, kind, bytes([int(channel_kind), channel, int(bool(state))]))


def measure_frame(kind: FrameKind, sender: int, recipient: int, channel: int,
                  sample: MeasureSample) -> BusFrame:
    q = quantize(sample)
    raw = _MEASURE.pack(channel, int(q.apparent_power), round(q.power_factor * 100),
                        round(q.current * 100))
    return BusFrame(sender, recipient, kind, raw)


def request_frame(kind: FrameKind, sender: int, recipient: int, channel: int) -> BusFrame:
    return BusFrame(sender, recipient, kind, bytes([channel]))


def parse_payload(frame: BusFrame):
    """Decode a frame payload into the named tuple matching its kind."""
    p = frame.payload
    k = frame.kind
    try:
        if k is FrameKind.COMMAND:
            return CommandPayload(CommandOp(p[0]), p[1], bool(p[2]))
        if k is FrameKind.STATE_REPLY:
            return StatePayload(ChannelKind(p[0]), p[1], bool(p[2]))
        if k is FrameKind.IN_VARIATION:
            return StatePayload(ChannelKind.IN, p[0], bool(p[1]))
        if k is FrameKind.OUT_VARIATION:
            return StatePayload(ChannelKind.OUT, p[0], bool(p[1]))
        if k in (FrameKind.MEASURE_REPLY, FrameKind.POWER_VARIATION):
            ch, va, pf, c = _MEASURE.unpack(p)
            return MeasurePayload(ch, MeasureSample(float(va), pf / 100, c / 100))
        return p[0]
    except (IndexError, struct.error, ValueError) as exc:
        raise BusError(f"malformed {k.label} payload: {p!r}") from exc


# --- event loop ------------------------------------------------------------

class EventLoop:
    """Deterministic discrete-event queue; ties fire in scheduling order."""

    def __init__(self, start: float = 0.0):
        self.now = start
        self._queue: List[Tuple[float, int, Callable[[], None]]] = []
        self._seq = itertools.count()

    def __len__(self):
        return len(self._queue)

    def schedule(self, time: float, action: Callable[[], None]) -> None:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        heapq.heappush(self._queue, (time, next(self._seq), action))

    def peek(self) -> Optional[float]:
        return self._queue[0][0] if self._queue else None

    def run_until(self, t_end: float) -> None:
        """Fire every event with time <= t_end, then park the clock at t_end."""
        while self._queue and self._queue[0][0] <= t_end:
            time, _, action = heapq.heappop(self._queue)
            self.now = time
            action()
        self.now = max(self.now, t_end)

    def run(self) -> None:
        while self._queue:
            time, _, action = heapq.heappop(self._queue)
            self.now = time
            action()


# --- bus -------------------------------------------------------------------

@dataclass(frozen=True)
class BusTiming:
    baud_rate: float = 9600.0
    bits_per_byte: int = 10

    def __post_init__(self):
        if self.baud_rate <= 0:
            raise ValueError("baud_rate must be > 0")
        if self.bits_per_byte <= 0:
            raise ValueError("bits_per_byte must be > 0")

    def occupation(self, size_bytes: int) -> float:
        return size_bytes * self.bits_per_byte / self.baud_rate


Handler = Callable[[BusFrame, float], None]


@dataclass
class Subscription:
    address: int
    handler: Handler
    promiscuous: bool = False
    bus: Optional["Bus"] = field(default=None, repr=False)

    def detach(self) -> None:
        if self.bus is not None:
            self.bus.detach(self.address)
            self.bus = None


@dataclass(frozen=True)
class Delivery:
    """One entry of the bus log."""

    request_time: float
    start: float
    end: float
    time: float
    frame: BusFrame
    perceived_by: Tuple[int, ...]
    processed_by: Tuple[int, ...]


class Bus:
    def __init__(self, loop: Optional[EventLoop] = None, timing: BusTiming = BusTiming(),
                 propagation_delay: float = 0.0, max_payload: int = DEFAULT_MAX_PAYLOAD):
        if propagation_delay < 0:
            raise ValueError("propagation_delay must be >= 0")
        self.loop = loop if loop is not None else EventLoop()
        self.timing = timing
        self.propagation_delay = propagation_delay
        self.max_payload = max_payload
        self.nodes: Dict[int, Subscription] = {}
        self.log: List[Delivery] = []
        self._free_at = float("-inf")

    def attach(self, address: int, handler: Handler, promiscuous: bool = False) -> Subscription:
        if not 0 <= address <= 255:
            raise BusError(f"address {address} does not fit the 1-byte header field")
        if address in self.nodes:
            raise BusError(f"duplicate bus address {address}")
        sub = Subscription(address, handler, promiscuous, self)
        self.nodes[address] = sub
        return sub

    def detach(self, address: int) -> None:
        self.nodes.pop(address, None)

    @property
    def free_at(self) -> float:
        return self._free_at

    def transmit(self, frame: BusFrame, request_time: Optional[float] = None) -> Delivery:
        """Queue ``frame`` on the medium; returns the (future) delivery record."""
        if frame.sender not in self.nodes:
            raise BusError(f"sender {frame.sender} is not attached")
        if len(frame.payload) > self.max_payload:
            raise BusError(f"payload of {len(frame.payload)} bytes exceeds max {self.max_payload}")
        t = self.loop.now if request_time is None else request_time
        start = max(t, self._free_at)
        end = start + self.timing.occupation(frame.size_bytes)
        self._free_at = end
        when = end + self.propagation_delay
        record = [None]

        def deliver():
            perceived = tuple(sorted(self.nodes))
            processed = tuple(a for a in perceived
                              if a == frame.recipient or self.nodes[a].promiscuous)
            record[0] = Delivery(t, start, end, when, frame, perceived, processed)
            self.log.append(record[0])
            for addr in processed:
                node = self.nodes.get(addr)
                if node is not None:
                    node.handler(frame, when)

        self.loop.schedule(when, deliver)
        return Delivery(t, start, end, when, frame, (), ())

    def write_log(self, fh: TextIO) -> None:
        fh.write("time_s,sender,recipient,kind,size_bytes\n")
        for d in self.log:
            fh.write(f"{d.time:.6f},{d.frame.sender},{d.frame.recipient},"
                     f"{d.frame.kind.label},{d.frame.size_bytes}\n")
