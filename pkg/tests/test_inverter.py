import pytest
from hypothesis import given, strategies as st

from oswitch.inverter import Inverter, InverterConfig, InverterState, PvTrace


def test_production_examples():
    inv = Inverter(InverterConfig(), PvTrace([0, 10, 20], [220, 1200, 0]))
    assert inv.read_production(0) == pytest.approx(198.0)
    assert inv.read_production(15) == 800.0
    assert inv.read_production(20) == 0.0
    with pytest.raises(ValueError):
        inv.read_production(21)


def test_battery_adds_to_availability_up_to_cap():
    inv = Inverter(InverterConfig(), state=InverterState(battery_level_wh=10))
    assert inv.available(220) == 800.0
    assert Inverter(InverterConfig()).available(220) == pytest.approx(198.0)


def test_surplus_charges_battery():
    inv = Inverter(InverterConfig())
    r = inv.step_energy(3600, 100, dc_w=220)
    assert r.served_by_solar == pytest.approx(100)
    assert r.battery_charge == pytest.approx(98 * 0.9)
    assert r.state.battery_level_wh == pytest.approx(88.2)
    assert r.served_by_grid == 0


def test_shortfall_goes_to_grid():
    r = Inverter(InverterConfig()).step_energy(3600, 300, dc_w=220)
    assert r.served_by_grid == pytest.approx(102)
    assert r.served_by_battery == 0


def test_zero_demand_charges_until_full():
    cfg = InverterConfig(battery_capacity_wh=50)
    r = Inverter(cfg).step_energy(3600, 0, dc_w=220)
    assert r.state.battery_level_wh == 50 and r.battery_charge == 50


def test_battery_discharges_before_grid():
    inv = Inverter(InverterConfig(), state=InverterState(battery_level_wh=30))
    r = inv.step_energy(3600, 300, dc_w=220)
    assert r.served_by_battery == pytest.approx(30)
    assert r.served_by_grid == pytest.approx(72)
    assert r.state.battery_level_wh == 0


def test_config_validation():
    with pytest.raises(ValueError):
        InverterConfig(conversion_efficiency=0)
    with pytest.raises(ValueError):
        InverterConfig(max_output_w=-1)
    with pytest.raises(ValueError):
        PvTrace([0, 0], [1, 1])


@given(st.floats(0, 2000), st.floats(0, 1500), st.floats(0, 600), st.floats(1, 3600))
def test_energy_is_conserved(dc, demand, level, dt):
    inv = Inverter(InverterConfig(), state=InverterState(battery_level_wh=level))
    r = inv.step_energy(dt, demand, dc_w=dc)
    h = dt / 3600
    assert r.served_by_solar + r.served_by_battery + r.served_by_grid == pytest.approx(demand * h, abs=1e-9)
    assert min(r.served_by_solar, r.served_by_battery, r.served_by_grid) >= -1e-12
    assert 0 <= r.state.battery_level_wh <= 600 + 1e-9
    assert r.state.battery_level_wh == pytest.approx(level - r.served_by_battery + r.battery_charge, abs=1e-9)
    # the output cap bounds what solar and battery deliver together
    assert r.served_by_solar + r.served_by_battery <= 800 * h + 1e-9


@given(st.floats(0, 2000), st.floats(0, 1500))
def test_no_battery_means_solar_or_grid(dc, demand):
    inv = Inverter(InverterConfig(battery_capacity_wh=0))
    r = inv.step_energy(3600, demand, dc_w=dc)
    assert r.served_by_battery == 0 and r.battery_charge == 0
    assert r.served_by_solar == pytest.approx(min(demand, inv.solar_ac(dc)))
