import numpy as np
import pytest

from oswitch.sim import ScenarioError, TraceError, Traces, generate_traces, load_scenario, read_traces, \
    reference_scenario_path, write_traces
from oswitch.sim.traces import digest_files

SPEC = {"days": 1, "resolution_s": 1.0,
        "outlets": [{"archetype": "fridge", "on_w": 80, "period_s": 2400, "duty": 0.4, "jitter": 0.1},
                    {"archetype": "resistive", "watts": 60, "hours": [[7, 22]]},
                    {"archetype": "spiky", "baseline_w": 35, "spike_prob": 0.0},
                    {"archetype": "constant", "watts": 20}],
        "pv": {"peak_dc_w": 220, "cloud_prob": 0.001}}


def test_archetypes():
    tr = generate_traces(SPEC, 1)
    assert set(np.unique(tr.outlets[0])) == {0.0, 80.0}
    assert tr.outlets[1][3 * 3600] == 0 and tr.outlets[1][12 * 3600] == 60
    assert np.all(tr.outlets[2] == 35.0)
    assert np.all(tr.outlets[3] == 20.0)
    assert tr.pv_dc.max() <= 220 and tr.pv_dc[0] == 0
    assert tr.duration == 86400


def test_same_seed_same_digest(tmp_path):
    a, b = generate_traces(SPEC, 7), generate_traces(SPEC, 7)
    assert a.digest() == b.digest()
    assert generate_traces(SPEC, 8).digest() != a.digest()
    pa = write_traces(a, tmp_path / "a")
    pb = write_traces(b, tmp_path / "b")
    assert digest_files([pa["outlets"], pa["pv"]]) == digest_files([pb["outlets"], pb["pv"]])


def test_invalid_archetype():
    with pytest.raises(TraceError):
        generate_traces({"outlets": [{"archetype": "toaster"}]}, 0)


def test_csv_round_trip(tmp_path):
    tr = generate_traces(SPEC, 3)
    p = write_traces(tr, tmp_path)
    assert p["outlets"].read_text().splitlines()[0] == "time_s,outlet_id,watts"
    back = read_traces(p["outlets"], p["pv"], tr.duration, tr.dt)
    assert np.array_equal(back.outlets, tr.outlets)
    assert np.array_equal(back.pv_dc, tr.pv_dc)


def test_gap_at_start_is_rejected(tmp_path):
    (tmp_path / "o.csv").write_text("time_s,outlet_id,watts\n5,0,10\n")
    (tmp_path / "p.csv").write_text("time_s,dc_watts\n0,100\n")
    with pytest.raises(TraceError):
        read_traces(tmp_path / "o.csv", tmp_path / "p.csv", 60)


def test_traces_validate():
    with pytest.raises(TraceError):
        Traces([[1, 2, 3]], [1, 2])
    with pytest.raises(TraceError):
        Traces([[1, -2]], [1, 2])


def test_reference_scenario_loads():
    sc = load_scenario(reference_scenario_path())
    assert sc.n_outlets == 8 and sc.warmup_days == 7
    assert sc.traces.duration >= sc.start_time + sc.duration_s


def test_scenario_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[run\n")
    with pytest.raises(ScenarioError):
        load_scenario(bad)
    bad.write_text("[inverter]\nwatts = 3\n[traces]\noutlets = [{archetype='constant'}]\n")
    with pytest.raises(ScenarioError, match="unknown"):
        load_scenario(bad)
    bad.write_text("[traces]\n")
    with pytest.raises(ScenarioError, match="no outlets"):
        load_scenario(bad)
    bad.write_text("[policy]\nname='naive'\ncolour=1\n[traces]\noutlets=[{archetype='constant'}]\n")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_scenario_from_csv_traces(tmp_path):
    tr = generate_traces(SPEC, 3)
    write_traces(tr, tmp_path)
    (tmp_path / "s.toml").write_text(
        "[run]\nwarmup_days = 0\nduration_s = 3600\n"
        "[traces]\noutlets_csv = 'outlets.csv'\npv_csv = 'pv.csv'\n")
    sc = load_scenario(tmp_path / "s.toml")
    assert np.array_equal(sc.traces.outlets, tr.outlets[:, :3600])
