"""Scenario parsing: unit strings, validation, overrides, presets."""

import pytest
import yaml

from swapsim.config import (ConfigError, Scenario, list_presets, load_scenario,
                            parse_size, parse_time, preset_path)
from swapsim.units import GB, KB, MB, MS, SEC, US


MINIMAL = {"vm": {"size": "1mb"}}


def scenario(extra=None, **top):
    data = {"vm": {"size": "1mb"}}
    data.update(top)
    if extra:
        data.update(extra)
    return Scenario(data)


# -------------------------------------------------------------------- parsing

@pytest.mark.parametrize("text,expect", [
    ("4gb", 4 * GB), ("512mb", 512 * MB), ("64kb", 64 * KB),
    ("2g", 2 * GB), ("1.5mb", int(1.5 * MB)), ("4096", 4096),
    (8192, 8192), ("0", 0), ("2_048", 2048), ("100b", 100),
])
def test_parse_size(text, expect):
    assert parse_size(text) == expect


def test_parse_size_percent_of_base():
    assert parse_size("75%", base=128 * MB) == 96 * MB
    assert parse_size("12.5%", base=64 * KB) == 8 * KB
    with pytest.raises(ConfigError):
        parse_size("75%")                # no base to take a percentage of


@pytest.mark.parametrize("text,expect", [
    ("60s", 60 * SEC), ("10ms", 10 * MS), ("250ns", 250), ("17us", 17 * US),
    ("0.5s", SEC // 2), (1234, 1234), ("1e6", 1_000_000),
])
def test_parse_time(text, expect):
    assert parse_time(text) == expect


def test_parse_garbage_raises():
    with pytest.raises(ConfigError):
        parse_size("four gigabytes")
    with pytest.raises(ConfigError):
        parse_time("soon")


# ------------------------------------------------------------------- scenario

def test_minimal_scenario_defaults():
    sc = scenario()
    assert sc.vm["size"] == 1 * MB
    assert sc.vm["page_size"] == 4096
    assert sc.seed == 0 and sc.duration is None
    assert sc.workloads == [] and sc.policies == []
    assert sc.metrics["sample_interval"] == 1 * SEC


def test_vm_size_must_be_page_multiple():
    with pytest.raises(ConfigError):
        Scenario({"vm": {"size": 4096 + 1}})
    with pytest.raises(ConfigError):
        Scenario({"vm": {"size": "3mb", "page_size": "2m"}})


def test_vm_size_required():
    with pytest.raises(ConfigError):
        Scenario({"vm": {}})


def test_init_ranges_become_page_spans():
    sc = scenario(extra={"init": {
        "resident": [{"start": 0, "end": "64kb"}],
        "swapped": [{"start": "64kb", "end": "100%", "written": False}],
    }})
    assert sc.init_resident == [(0, 16, True)]
    assert sc.init_swapped == [(16, 256, False)]


def test_init_range_validation():
    with pytest.raises(ConfigError):
        scenario(extra={"init": {"resident": [{"start": 0, "end": 6000}]}})
    with pytest.raises(ConfigError):
        scenario(extra={"init": {"resident": [{"start": 0, "end": "2mb"}]}})


def test_engine_limit_percent_and_times():
    sc = scenario(extra={"engine": {"memory_limit": "50%",
                                    "fault_sw": "17us"}})
    assert sc.engine["memory_limit"] == 512 * KB
    assert sc.engine["fault_sw"] == 17 * US


def test_policy_params_parse_times_and_sizes():
    sc = scenario(extra={"policies": [
        {"kind": "dt", "limit_reclaimer": True,
         "params": {"scan_interval": "10s"}},
        {"kind": "aggressive", "params": {"budget": "25%", "tick": "1s"}},
    ]})
    assert sc.policies[0]["params"]["scan_interval"] == 10 * SEC
    assert sc.policies[0]["limit_reclaimer"]
    assert sc.policies[1]["params"]["budget"] == 256 * KB
    assert sc.policies[1]["params"]["tick"] == 1 * SEC
    with pytest.raises(ConfigError):
        scenario(extra={"policies": [{"params": {}}]})


def test_workloads_stack_into_disjoint_ranges():
    sc = scenario(extra={"workloads": [
        {"kind": "keyvalue", "region": "256kb"},
        {"kind": "keyvalue", "region": "256kb"},
        {"kind": "keyvalue", "region": "128kb", "base": "0"},
    ]})
    assert [(w["base"], w["region"]) for w in sc.workloads] == [
        (0, 256 * KB), (256 * KB, 256 * KB), (0, 128 * KB)]


def test_workload_range_validation():
    with pytest.raises(ConfigError):
        scenario(extra={"workloads": [
            {"kind": "keyvalue", "region": "1mb", "base": "512kb"}]})
    with pytest.raises(ConfigError):
        scenario(extra={"workloads": [
            {"kind": "keyvalue", "region": "4kb", "base": 100}]})


def test_workload_params_parse_units():
    sc = scenario(extra={"workload": {
        "kind": "cold_ratio_random", "region": "512kb",
        "params": {"hot_bytes": "50%", "inter_access_ns": "200ns",
                   "ratio": 1e-4}}})
    w = sc.workloads[0]
    assert w["params"]["hot_bytes"] == 256 * KB   # percent of the region
    assert w["params"]["inter_access_ns"] == 200
    assert w["params"]["ratio"] == 1e-4


def test_limit_schedule_sorted_and_parsed():
    sc = scenario(extra={"limit_schedule": [
        {"at": "30s", "limit": "25%"}, {"at": "60s", "limit": "100%"}]})
    assert sc.limit_schedule == [(30 * SEC, 256 * KB), (60 * SEC, 1 * MB)]
    with pytest.raises(ConfigError):
        scenario(extra={"limit_schedule": [
            {"at": "60s", "limit": 0}, {"at": "30s", "limit": 0}]})


# ------------------------------------------------------------------ overrides

def test_load_scenario_with_overrides(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump({
        "seed": 1, "vm": {"size": "1mb"},
        "workload": {"kind": "cold_ratio_random", "params": {"ratio": 0.5}},
    }))
    sc = load_scenario(p, overrides={"workload.params.ratio": "5e-5",
                                     "vm.size": "2mb"}, seed=9)
    assert sc.workloads[0]["params"]["ratio"] == 5e-5   # stays numeric
    assert sc.vm["size"] == 2 * MB
    assert sc.seed == 9
    assert sc.name == "s"


def test_override_to_missing_key_raises(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(MINIMAL))
    with pytest.raises(ConfigError):
        load_scenario(p, overrides={"vm.speed": 3})


# -------------------------------------------------------------------- presets

PRESETS = ["aggressive_phases", "breakeven", "linearpf_seq", "scramble_halves",
           "thrash_80pct", "wsr_recovery", "wss_steps"]


def test_preset_listing():
    assert list_presets() == PRESETS
    with pytest.raises(ConfigError):
        preset_path("nonexistent")


@pytest.mark.parametrize("name", PRESETS)
def test_presets_parse_cleanly(name):
    sc = load_scenario(preset_path(name))
    assert sc.vm["size"] > 0
    assert sc.workloads, f"{name} has no workload"
    limit = sc.engine.get("memory_limit")
    if limit is not None:
        assert 0 < limit <= sc.vm["size"]
    for w in sc.workloads:
        assert w["base"] + w["region"] <= sc.vm["size"]
