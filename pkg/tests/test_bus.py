import pytest
from hypothesis import given, settings, strategies as st

from oswitch.bus import (GATEWAY_ADDRESS, Bus, BusError, BusFrame, BusTiming, ChannelKind, CommandOp,
                         EventLoop, FrameKind, command_frame, measure_frame, parse_payload,
                         request_frame, state_frame)
from oswitch.electrical import MeasureSample


def ten_byte(sender=1, recipient=2):
    return BusFrame(sender, recipient, FrameKind.POWER_VARIATION, bytes(6))


def make_bus(*addresses, promiscuous=(), **kw):
    bus = Bus(EventLoop(), **kw)
    seen = {a: [] for a in addresses}
    for a in addresses:
        bus.attach(a, lambda f, t, a=a: seen[a].append((f, t)), promiscuous=a in promiscuous)
    return bus, seen


def test_single_frame_delivery_time():
    bus, seen = make_bus(1, 2)
    bus.transmit(ten_byte(), request_time=0.0)
    bus.loop.run()
    assert seen[2][0][1] == pytest.approx(10 * 10 / 9600, abs=1e-12)


def test_second_frame_waits_for_the_medium():
    bus, seen = make_bus(1, 2)
    bus.transmit(ten_byte(), 0.0)
    bus.transmit(ten_byte(), 0.0)
    bus.loop.run()
    assert [t for _, t in seen[2]] == pytest.approx([0.0104166667, 0.0208333333], abs=1e-9)


def test_propagation_delay_is_added():
    bus, seen = make_bus(1, 2, propagation_delay=0.001)
    bus.transmit(ten_byte(), 0.0)
    bus.loop.run()
    assert seen[2][0][1] == pytest.approx(10 * 10 / 9600 + 0.001)


def test_only_recipient_and_gateway_process():
    bus, seen = make_bus(GATEWAY_ADDRESS, 3, 5, promiscuous=(GATEWAY_ADDRESS,))
    bus.transmit(ten_byte(5, 3), 0.0)
    bus.loop.run()
    assert len(seen[3]) == 1 and len(seen[5]) == 0 and len(seen[GATEWAY_ADDRESS]) == 1
    d = bus.log[0]
    assert d.perceived_by == (0, 3, 5) and d.processed_by == (0, 3)


def test_unattached_recipient_only_gateway_processes():
    bus, seen = make_bus(GATEWAY_ADDRESS, 1, promiscuous=(GATEWAY_ADDRESS,))
    bus.transmit(ten_byte(1, 7), 0.0)
    bus.loop.run()
    assert bus.log[0].processed_by == (0,)
    assert not seen[1]


def test_attach_errors():
    bus, _ = make_bus(3)
    with pytest.raises(BusError):
        bus.attach(3, lambda f, t: None)
    with pytest.raises(BusError):
        bus.transmit(ten_byte(9, 3))
    with pytest.raises(BusError):
        bus.transmit(BusFrame(3, 3, FrameKind.COMMAND, bytes(65)))


def test_codecs_round_trip():
    f = command_frame(0, 2, CommandOp.CONTROL_OUT, 5, True)
    assert BusFrame.decode(f.encode()) == f
    assert parse_payload(f) == (CommandOp.CONTROL_OUT, 5, True)
    s = state_frame(FrameKind.OUT_VARIATION, 2, 0, ChannelKind.OUT, 4, True)
    assert parse_payload(s) == (ChannelKind.OUT, 4, True)
    m = measure_frame(FrameKind.POWER_VARIATION, 2, 0, 3, MeasureSample(150.4, 0.904, 0.7049))
    assert m.size_bytes == 10
    ch, sample = parse_payload(m)
    assert ch == 3 and sample == MeasureSample(150.0, 0.9, 0.7)
    assert parse_payload(request_frame(FrameKind.MEASURE_REQUEST, 0, 2, 6)) == 6
    with pytest.raises(BusError):
        BusFrame.decode(b"\x01\x02\x06\x05ab")


def test_log_csv(tmp_path):
    import io
    bus, _ = make_bus(1, 2)
    bus.transmit(ten_byte(), 0.0)
    bus.loop.run()
    buf = io.StringIO()
    bus.write_log(buf)
    assert buf.getvalue().splitlines() == ["time_s,sender,recipient,kind,size_bytes",
                                           "0.010417,1,2,power-variation,10"]


def test_event_loop_ties_fire_in_order():
    loop = EventLoop()
    out = []
    for k in range(5):
        loop.schedule(1.0, lambda k=k: out.append(k))
    loop.run()
    assert out == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        loop.schedule(0.5, lambda: None)


requests = st.lists(st.tuples(st.floats(0, 1), st.integers(0, 20)), min_size=1, max_size=60)


@settings(max_examples=60)
@given(requests)
def test_fifo_and_exact_occupation(reqs):
    bus, _ = make_bus(1, 2)
    timing = BusTiming()
    sent = []
    for t, size in sorted(reqs, key=lambda r: r[0]):
        bus.loop.run_until(t)
        f = BusFrame(1, 2, FrameKind.COMMAND, bytes(size))
        sent.append(f)
        bus.transmit(f, t)
    bus.loop.run()
    assert [d.frame for d in bus.log] == sent
    for a, b in zip(bus.log, bus.log[1:]):
        assert b.start >= a.end - 1e-12
    for d in bus.log:
        assert d.end - d.start == pytest.approx(timing.occupation(d.frame.size_bytes), abs=1e-12)
        assert d.start >= d.request_time
