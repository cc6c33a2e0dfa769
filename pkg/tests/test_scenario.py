import json

import pytest

from doc_sim import scenario as sm
from doc_sim.scenario import (ScenarioError, apply_overrides, build_rate_model,
                              catalog_names, load_scenario,
                              resolve_scenario_path, validate_scenario)

MINIMAL = {
    "name": "mini",
    "experiment": "fairness_sweep",
    "params": {"T_tx": 10, "T_total": 10_000},
    "station_groups": [
        {"count": 2, "channel": {"kind": "iid-rayleigh", "W": 1e7, "rho": 1.0},
         "strategy": {"kind": "doc"}},
    ],
    "controller": {"gain_mode": "ziegler-nichols"},
    "intervals": 5, "replications": 1, "measure_from": 0,
}


def test_catalog_loads_and_validates():
    names = catalog_names()
    assert {"fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11",
            "fig12", "fig13", "fig14", "fig15", "join_leave"} <= set(names)
    for name in names:
        scn = load_scenario(resolve_scenario_path(name))
        assert scn.n >= 1
        assert scn.replications >= 1


def test_unknown_scenario_reference():
    with pytest.raises(ScenarioError, match="catalog"):
        resolve_scenario_path("fig99")


def test_malformed_json_reports_line_and_column(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x",\n  "experiment": }\n')
    with pytest.raises(ScenarioError, match=r"line 2, column"):
        load_scenario(bad)


def test_validation_messages():
    with pytest.raises(ScenarioError, match="experiment"):
        validate_scenario(dict(MINIMAL, experiment="bogus"))
    with pytest.raises(ScenarioError, match="station_groups"):
        validate_scenario(dict(MINIMAL, station_groups=[]))
    raw = json.loads(json.dumps(MINIMAL))
    raw["station_groups"][0]["channel"]["kind"] = "alien"
    with pytest.raises(ScenarioError, match="channel.kind"):
        validate_scenario(raw)
    raw2 = json.loads(json.dumps(MINIMAL))
    raw2["params"]["N"] = 7
    with pytest.raises(ScenarioError, match="params.N"):
        validate_scenario(raw2)
    raw3 = json.loads(json.dumps(MINIMAL))
    raw3["controller"] = {"gain_mode": "ziegler-nichols", "turbo": True}
    with pytest.raises(ScenarioError, match="turbo"):
        validate_scenario(raw3)
    raw4 = json.loads(json.dumps(MINIMAL))
    raw4["measure_from"] = 99
    with pytest.raises(ScenarioError, match="measure_from"):
        validate_scenario(raw4)


def test_station_group_expansion():
    scn = validate_scenario(json.loads(json.dumps(MINIMAL)))
    assert scn.n == 2
    assert scn.stations[0].channel.rho == 1.0
    assert scn.stations[0].strategy["kind"] == "doc"


def test_build_rate_model_units():
    m = build_rate_model({"kind": "discrete-mapped", "W": 1e7, "rho": 4.0,
                          "rates_mbps": [1, 2, 5.5]})
    assert m.rate_table == (1e6, 2e6, 5.5e6)
    with pytest.raises(ScenarioError, match="unknown keys"):
        build_rate_model({"kind": "iid-rayleigh", "bandwidth": 1})


def test_overrides():
    raw = json.loads(json.dumps(MINIMAL))
    out = apply_overrides(raw, ["station_groups.0.channel.rho=4.5",
                                "intervals=9"])
    assert out["station_groups"][0]["channel"]["rho"] == 4.5
    assert out["intervals"] == 9
    assert raw["intervals"] == 5  # original untouched

    with pytest.raises(ScenarioError, match="valid keys"):
        apply_overrides(raw, ["controller.gian_mode=manual"])
    with pytest.raises(ScenarioError, match="integer index"):
        apply_overrides(raw, ["station_groups.first.count=1"])
    with pytest.raises(ScenarioError, match="out of range"):
        apply_overrides(raw, ["station_groups.5.count=1"])
    with pytest.raises(ScenarioError, match="key=value"):
        apply_overrides(raw, ["no-equals-sign"])
    # string values that are not JSON pass through verbatim
    out2 = apply_overrides(raw, ["controller.gain_mode=manual"])
    assert out2["controller"]["gain_mode"] == "manual"


def test_events_validation():
    raw = json.loads(json.dumps(MINIMAL))
    raw["events"] = [{"interval": 2, "action": "join", "station": 1}]
    scn = validate_scenario(raw)
    assert scn.events[0]["action"] == "join"
    raw["events"] = [{"interval": 2, "action": "explode", "station": 1}]
    with pytest.raises(ScenarioError, match="join or leave"):
        validate_scenario(raw)
