import json

import pytest

from sigmatune.config import (
    RunConfig,
    config_from_dict,
    load_config,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from sigmatune.exceptions import ConfigError, UnknownTarget
from sigmatune.sigmas import SigmaBinding


def test_defaults_are_the_baseline():
    cfg = config_from_dict({})
    assert (cfg.controller.gamma1, cfg.controller.gamma2, cfg.controller.k) == (12.0, 4.0, 115.0)
    assert (cfg.plant.delta, cfg.plant.eps1, cfg.plant.eps2) == (0.5, 1.6, -0.8)
    assert (cfg.plant.forcing_amp, cfg.plant.forcing_freq) == (3.0, 10.0)
    assert cfg.adaptive.err_threshold == 0.8 and cfg.adaptive.window == 100
    assert cfg.adaptive.max_attempts == 200 and cfg.adaptive.memory_fraction == 0.1
    assert cfg.collection.n_episodes == 50 and cfg.simulation.dt == 1e-3


@pytest.mark.parametrize("data", [
    {"plnat": {}},
    {"plant": {"dleta": 1.0}},
    {"adaptive": {"window": 0}},
    {"adaptive": {"memory_fraction": 1.0}},
    {"adaptive": {"err_threshold": -1}},
    {"adaptive": {"coupling": "sometimes"}},
    {"seed": -3},
    {"plant": []},
])
def test_invalid_configs_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_bad_binding_rejected():
    with pytest.raises(UnknownTarget):
        config_from_dict({"adaptive": {"binding": "gamma1,mass"}})


def test_missing_file_names_the_path(tmp_path):
    path = tmp_path / "nope.json"
    with pytest.raises(ConfigError, match="nope.json"):
        load_config(path)


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "plant": {,}\n}')
    with pytest.raises(ConfigError, match=r"bad.json:2"):
        load_config(path)


def test_round_trip_through_dict(tmp_path):
    cfg = config_from_dict({"seed": 4, "plant": {"delta": 0.25}, "adaptive": {"coupling": "uncoupled"}})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    assert isinstance(again, RunConfig) and again.seed == 4


def test_section_seed_falls_back_to_master():
    cfg = config_from_dict({"seed": 9, "collection": {"seed": 2}})
    assert cfg.section_seed("collection") == 2
    assert cfg.section_seed("adaptive") == 9


def test_scenario_parsing():
    sc = scenario_from_dict({
        "binding": ["model.eps1", "model.eps2"],
        "events": [{"at_time": 0.1, "action": "SetSigmas", "s1": 1.0, "s2": 2.0}],
    })
    assert sc.binding == SigmaBinding("model.eps1", "model.eps2")
    assert sc.events[0].args == {"s1": 1.0, "s2": 2.0}
    assert scenario_from_dict(scenario_to_dict(sc)).events == sc.events


@pytest.mark.parametrize("data", [
    {"events": [{"action": "SetSigmas"}]},
    {"events": [{"at_time": "soon", "action": "SetSigmas", "s1": 1, "s2": 1}]},
    {"events": [{"at_time": 0, "action": "Teleport"}]},
    {"when": []},
])
def test_invalid_scenarios_rejected(data):
    with pytest.raises(ConfigError):
        scenario_from_dict(data)


@pytest.mark.parametrize("name", ["failure", "sabotage"])
def test_shipped_scenarios_load(name):
    sc = load_scenario(f"scenarios/{name}.json")
    assert sc.binding is not None and sc.events


@pytest.mark.parametrize("name", ["sabotage", "regime_shift"])
def test_shipped_configs_load(name):
    load_config(f"configs/{name}.json")
