import json
import math

import pytest

from nv_deer.errors import ParseError, ValidationError
from nv_deer.io.config import default_config, load_config, parse_config


def echo_doc(**extra):
    doc = {
        "experiment": "echo",
        "seed": 1,
        "scan": {"variable": "tau_us", "start": 1, "stop": 5, "points": 5},
    }
    doc.update(extra)
    return doc


def test_defaults_are_filled_in():
    cfg = parse_config(json.dumps(echo_doc()))
    assert cfg.timing.pi_half == pytest.approx(0.4e-6)
    assert cfg.timing.pi == pytest.approx(0.88e-6)
    assert cfg.nv.zfs == pytest.approx(2.7e9)
    assert cfg.field.magnitude == pytest.approx(23.0)
    assert cfg.env.crosstalk is not None
    assert cfg.env.crosstalk.detuning == pytest.approx(2 * math.pi * 49e6)
    assert cfg.env.crosstalk.duration == pytest.approx(0.4e-6)
    assert cfg.empirical_k_per_ppb == pytest.approx(34.0)
    assert cfg.scan.values() == pytest.approx([1e-6, 2e-6, 3e-6, 4e-6, 5e-6])


def test_crosstalk_can_be_disabled():
    cfg = parse_config(json.dumps(echo_doc(env={"crosstalk": None})))
    assert cfg.env.crosstalk is None


def test_all_problems_are_reported_together():
    doc = echo_doc(timing={"tau_us": -1, "pump_us": 0}, bogus=3)
    with pytest.raises(ValidationError) as info:
        parse_config(json.dumps(doc))
    problems = "\n".join(info.value.problems)
    assert "timing.tau_us" in problems
    assert "timing.pump_us" in problems
    assert "bogus" in problems
    assert info.value.exit_code == 2


def test_seed_is_required():
    doc = echo_doc()
    del doc["seed"]
    with pytest.raises(ValidationError, match="seed"):
        parse_config(json.dumps(doc))
    assert parse_config(json.dumps(doc), seed_override=9).seed == 9


def test_seed_override_wins():
    assert parse_config(json.dumps(echo_doc()), seed_override=42).seed == 42


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as info:
        parse_config('{\n  "seed": 1,\n}')
    assert info.value.line == 3


def test_unknown_section_key():
    with pytest.raises(ValidationError, match="unknown key 'pi_halfs'"):
        parse_config(json.dumps(echo_doc(timing={"pi_halfs": 0.4})))


def test_scan_variable_must_match_experiment():
    doc = echo_doc(scan={"variable": "pump_offset_us", "start": 0, "stop": 1, "points": 3})
    with pytest.raises(ValidationError, match="scan.variable"):
        parse_config(json.dumps(doc))


def test_deer_needs_tau_and_one_bath_model(deer3_config):
    doc = dict(deer3_config)
    doc["timing"] = {}
    doc["bath"] = {"concentration_ppb": 10}
    with pytest.raises(ValidationError) as info:
        parse_config(json.dumps(doc))
    problems = "\n".join(info.value.problems)
    assert "tau_us" in problems
    assert "exactly one of the kinetics or bath" in problems


def test_kinetics_from_decay_rate(deer3_config):
    cfg = parse_config(json.dumps(deer3_config))
    assert cfg.kinetics.decay_rate == pytest.approx(6300.0)
    assert cfg.tau == pytest.approx(41e-6)


def test_kinetics_needs_exactly_one_concentration(deer3_config):
    doc = dict(deer3_config, kinetics={"concentration_ppb": 10, "decay_rate_per_s": 100})
    with pytest.raises(ValidationError, match="exactly one of concentration_ppb"):
        parse_config(json.dumps(doc))


def test_bath_settings_in_cgs():
    doc = {"experiment": "mc_bath", "seed": 0,
           "bath": {"concentration_ppb": 50, "radius_nm": 200, "axis_angle_deg": 90}}
    cfg = parse_config(json.dumps(doc))
    assert cfg.bath.concentration == pytest.approx(8.8e15)
    assert cfg.bath.radius == pytest.approx(2e-5)
    assert cfg.bath.exclusion == pytest.approx(2e-7)
    assert cfg.bath.axis_angle == pytest.approx(math.pi / 2)
    assert cfg.scan is None


def test_config_hash_depends_on_content():
    a = parse_config(json.dumps(echo_doc()))
    b = parse_config(json.dumps(echo_doc()))
    c = parse_config(json.dumps(echo_doc()), seed_override=2)
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash


def test_hash_ignores_key_order_and_defaults():
    explicit = echo_doc(timing={"pi_half_us": 0.4})
    assert parse_config(json.dumps(explicit)).config_hash == parse_config(json.dumps(echo_doc())).config_hash


def test_load_config(write_config):
    path = write_config(echo_doc())
    assert load_config(path).experiment == "echo"


def test_default_config():
    cfg = default_config()
    assert cfg.experiment == "fit"
    assert cfg.kinetics is None
    assert cfg.constants.carbon_density == pytest.approx(1.76e23)


def test_values_are_not_coerced_from_strings():
    with pytest.raises(ValidationError) as info:
        parse_config(json.dumps(echo_doc(timing={"pi_half_us": "0.4"}, seed=True)))
    problems = "\n".join(info.value.problems)
    assert "timing.pi_half_us" in problems
    assert "seed" in problems


def test_nested_sections_reject_unknown_keys():
    doc = echo_doc(env={"crosstalk": {"rabi_MHz": 1.5, "width_us": 0.4}})
    with pytest.raises(ValidationError, match="unknown key 'width_us' in env.crosstalk"):
        parse_config(json.dumps(doc))


def test_section_invariants_are_checked():
    doc = {"experiment": "mc_bath", "seed": 0,
           "bath": {"concentration_ppb": 50, "radius_nm": 1, "estimator": "median"}}
    with pytest.raises(ValidationError) as info:
        parse_config(json.dumps(doc))
    problems = "\n".join(info.value.problems)
    assert "bath.estimator" in problems
    with pytest.raises(ValidationError, match="radius_nm must exceed exclusion_nm"):
        parse_config(json.dumps({"experiment": "mc_bath", "seed": 0,
                                 "bath": {"concentration_ppb": 50, "radius_nm": 1}}))


def test_integer_keys_reject_fractions():
    doc = echo_doc(scan={"variable": "tau_us", "start": 1, "stop": 5, "points": 4.5})
    with pytest.raises(ValidationError, match="scan.points"):
        parse_config(json.dumps(doc))
