import io

import pytest

from oswitch.bus import Bus, ChannelKind, EventLoop, FrameKind, measure_frame, state_frame
from oswitch.electrical import MeasureSample
from oswitch.gateway import Device, DeviceKindError, DeviceRegistry, Gateway, UnknownDevice
from oswitch.meter import MeterUnit


@pytest.fixture
def plant():
    loop = EventLoop()
    bus = Bus(loop)
    reg = DeviceRegistry([Device("desk-lamp", 2, 1, ChannelKind.OUT, True),
                          Device("door", 2, 0, ChannelKind.IN),
                          Device("heater", 2, 3, ChannelKind.OUT)])
    gw = Gateway(bus, reg)
    meter = MeterUnit(2)
    meter.attach(bus)
    return loop, bus, gw, meter


def test_power_variation_appends_history(plant):
    loop, bus, gw, meter = plant
    bus.transmit(measure_frame(FrameKind.POWER_VARIATION, 2, 0, 3, MeasureSample(150, 0.9, 0.7)))
    loop.run()
    row = gw.latest((2, 3))
    assert row.derived.active_power == pytest.approx(135.0)


def test_out_variation_updates_mirror(plant):
    loop, bus, gw, meter = plant
    bus.transmit(state_frame(FrameKind.OUT_VARIATION, 2, 0, ChannelKind.OUT, 2, True))
    loop.run()
    assert gw.out_state[(2, 2)] is True


def test_unknown_sender_is_logged_not_applied(plant):
    loop, bus, gw, meter = plant
    bus.attach(99, lambda f, t: None)
    bus.transmit(state_frame(FrameKind.OUT_VARIATION, 99, 0, ChannelKind.OUT, 2, True))
    loop.run()
    assert gw.warnings and (99, 2) not in gw.out_state
    assert gw.raw_log[-1][1].sender == 99


def test_send_command_round_trip(plant):
    loop, bus, gw, meter = plant
    events = []
    gw.subscribe(lambda *e: events.append(e))
    frame = gw.send_command("desk-lamp", True)
    assert frame.kind is FrameKind.COMMAND
    assert gw.state("desk-lamp") is None  # nothing assumed before the meter answers
    loop.run()
    assert meter.outputs[1].relay_on and gw.state("desk-lamp") is True
    assert events and events[-1][0] == "out"
    with pytest.raises(UnknownDevice):
        gw.send_command("unknown", True)
    with pytest.raises(DeviceKindError):
        gw.send_command("door", True)


def test_mirror_converges_to_meter_state(plant):
    loop, bus, gw, meter = plant
    for on in (True, False, True, True, False):
        gw.control(2, 5, on)
    loop.run()
    assert gw.out_state[(2, 5)] is meter.outputs[5].relay_on is False


def test_query_history(plant):
    loop, bus, gw, meter = plant
    gw._append((2, 3), 0.0, MeasureSample(100, 1.0, 100 / 230))
    b = gw.query_history("heater", 0, 60, 60)
    assert len(b) == 1 and b[0].apparent_power == pytest.approx(100)
    gw._append((2, 3), 30.0, MeasureSample(200, 1.0, 200 / 230))
    assert gw.query_history("heater", 0, 60, 60)[0].apparent_power == pytest.approx(150)
    with pytest.raises(ValueError):
        gw.query_history("heater", 60, 60, 10)


def test_history_csv_is_reconstructible(plant):
    loop, bus, gw, meter = plant
    for k, p in enumerate((50, 120, 3)):
        bus.transmit(measure_frame(FrameKind.POWER_VARIATION, 2, 0, 1, MeasureSample(p, 0.8, p / 230)),
                     request_time=float(k))
    loop.run()
    buf = io.StringIO()
    gw.write_history(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "time_s,channel,apparent_va,power_factor,current_a,active_w,reactive_var"
    assert len(lines) == 4 and lines[1].split(",")[1] == "2.1"
    for r in gw.history[(2, 1)]:
        assert (r.derived.active_power ** 2 + r.derived.reactive_power ** 2) ** 0.5 == \
            pytest.approx(r.sample.apparent_power, rel=1e-9)


def test_registry_csv_round_trip(tmp_path):
    reg = DeviceRegistry([Device("a", 1, 0, ChannelKind.OUT, True), Device("b", 1, 2, ChannelKind.IN)])
    p = tmp_path / "reg.csv"
    with open(p, "w") as fh:
        fh.write("name,address,channel,kind,interruptible\n")
        reg.write(fh)
    back = DeviceRegistry.read(p)
    assert back.interruptible_flags() == {"a": True, "b": False}
    assert back.lookup("1.2").name == "b"
