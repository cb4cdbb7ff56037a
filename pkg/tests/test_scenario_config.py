#!/usr/bin/env python
"""Tests for loading, validating and serializing scenario documents."""
import json

import pytest

from scenario_config import (
    BUNDLED_DIR,
    ScenarioConfigError,
    list_scenarios,
    load_scenario,
    parse_scenario,
    resolve_scenario,
    serialize_scenario,
)
from tendon_hand import max_load_single

BUNDLED = ["hang_load_sweep", "hover", "perch_cylinder", "perch_square"]

MINIMAL = {
    "name": "minimal",
    "waypoints": [{"time_s": 0.0, "position_m": [0.0, 0.0, 1.0]}],
    "initial": {"position_m": [0.0, 0.0, 1.0]},
}


def document(**updates):
    doc = json.loads(json.dumps(MINIMAL))
    doc.update(updates)
    return json.dumps(doc)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_survive_serialization(name):
    config = load_scenario(name)
    assert config.name == name
    assert parse_scenario(serialize_scenario(config)) == config


def test_list_scenarios(monkeypatch):
    monkeypatch.delenv("PERCHSIM_CONFIG_DIR", raising=False)
    assert list_scenarios() == BUNDLED
    assert resolve_scenario("hover") == BUNDLED_DIR / "hover.json"


def test_config_dir_override(monkeypatch, tmp_path):
    (tmp_path / "mine.json").write_text(document(name="mine"), encoding="utf-8")
    monkeypatch.setenv("PERCHSIM_CONFIG_DIR", str(tmp_path))
    assert list_scenarios() == ["mine"]
    assert load_scenario("mine").name == "mine"
    # Explicit paths bypass the directory lookup.
    assert load_scenario(BUNDLED_DIR / "hover.json").name == "hover"


def test_defaults_fill_missing_sections():
    config = parse_scenario(document())
    assert config.simulation.initial_phase == "FREE_FLIGHT"
    assert config.rotor_geometry().max_thrust == pytest.approx(8.0)
    assert config.inertial_params().mass == pytest.approx(2.5)
    assert config.maneuver_params().hang_pitch == pytest.approx(1.5707963, rel=1e-7)


def test_unknown_key_is_rejected():
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(colour="red"))
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(beam={"radius": 0.02}))


def test_bad_schema_version_and_malformed_json():
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(schema_version=2))
    with pytest.raises(ScenarioConfigError):
        parse_scenario("{not json")
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(waypoints=[]))


def test_invalid_components_surface_at_load_time():
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(beam={"axis": [0.0, 0.0, 1.0]}))
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(hand={"link_length_m": -0.1}))
    with pytest.raises(ScenarioConfigError):
        parse_scenario(document(inertial={"mass_kg": 0.0}))
    with pytest.raises(ScenarioConfigError):
        parse_scenario(
            document(
                waypoints=[
                    {"time_s": 1.0, "position_m": [0.0, 0.0, 1.0]},
                    {"time_s": 1.0, "position_m": [1.0, 0.0, 1.0]},
                ]
            )
        )


def test_missing_file():
    with pytest.raises(ScenarioConfigError):
        load_scenario("does_not_exist")


def test_hand_calibration():
    params = load_scenario("hang_load_sweep").hand_params()
    assert max_load_single(params, 0.0) == pytest.approx(23.9, abs=1e-6)


def test_with_payload():
    config = load_scenario("hang_load_sweep")
    heavier = config.with_payload(5.0)
    assert heavier.simulation.payload_kg == 5.0
    assert heavier.name == "hang_load_sweep+5kg"
    assert config.simulation.payload_kg == 0.0
