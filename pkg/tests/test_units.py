import math

import numpy as np
import pytest

from crgame.units import (DEFAULT_SCENARIO, PricingSpec, ScenarioError, dbm_to_watt,
                          default_scenario, load_scenario, noise_power, watt_to_dbm)


def test_dbm_reference_points():
    assert dbm_to_watt(30.0) == pytest.approx(1.0, rel=1e-15)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watt(21.03) == pytest.approx(0.12677, rel=1e-4)


def test_dbm_rejects_non_finite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(ValueError):
            dbm_to_watt(bad)


def test_dbm_round_trip():
    x = np.logspace(-20, 3, 500)
    np.testing.assert_allclose(dbm_to_watt(watt_to_dbm(x)), x, rtol=1e-12)


def test_noise_power_examples():
    n = noise_power(-173.0, 10930.0)
    assert watt_to_dbm(n) == pytest.approx(-132.613, abs=1e-3)
    assert n == pytest.approx(5.48e-17, rel=1e-3)
    assert noise_power(-173.0, 1.0) == dbm_to_watt(-173.0)
    assert noise_power(0.0, 10.0) == pytest.approx(1e-2, rel=1e-14)


@pytest.mark.parametrize("bw", [0.0, -5.0])
def test_noise_power_needs_positive_bandwidth(bw):
    with pytest.raises(ValueError):
        noise_power(-173.0, bw)


def test_default_document_loads():
    cfg = load_scenario(default_scenario())
    assert (cfg.num_users, cfg.num_subcarriers) == (10, 10)
    np.testing.assert_allclose(cfg.max_power, 0.12677, rtol=1e-4)
    np.testing.assert_allclose(cfg.noise, 5.48e-17, rtol=1e-3)
    np.testing.assert_allclose(cfg.i_max, 1e-10, rtol=1e-12)
    assert cfg.pricing.flat_model == "vp"
    assert cfg.pu_power == pytest.approx(1.0)


def test_interference_tolerance_conversion():
    cfg = load_scenario(default_scenario(pu={"i_max_dbm": -70.0}))
    np.testing.assert_allclose(cfg.i_max, np.full(10, 1.0e-10), rtol=1e-12)


def test_missing_noise_names_the_field():
    doc = default_scenario()
    del doc["radio"]["noise_psd_dbm_hz"]
    with pytest.raises(ScenarioError, match="noise"):
        load_scenario(doc)


@pytest.mark.parametrize("section, key, value, field", [
    ("network", "users", 0, "network.users"),
    ("network", "subcarriers", 0, "network.subcarriers"),
    ("radio", "bandwidth_hz", 0.0, "radio.bandwidth_hz"),
    ("pu", "distance_m", -1.0, "pu.distance_m"),
    ("pricing", "lambda0", -1.0, "pricing.lambda0"),
    ("pricing", "flat", "quadratic", "pricing.flat"),
    ("run", "mode", "chaotic", "run.mode"),
])
def test_bad_values_report_their_field(section, key, value, field):
    doc = default_scenario()
    doc[section][key] = value
    with pytest.raises(ScenarioError) as err:
        load_scenario(doc)
    assert err.value.field == field


def test_missing_section_reported():
    doc = default_scenario()
    del doc["pu"]
    with pytest.raises(ScenarioError, match="pu"):
        load_scenario(doc)


def test_per_index_overrides():
    doc = default_scenario(network={"users": 2, "subcarriers": 3})
    doc["radio"]["max_power_dbm"] = [20.0, 10.0]
    doc["pu"]["i_max_dbm"] = [-70.0, -60.0, -50.0]
    cfg = load_scenario(doc)
    np.testing.assert_allclose(cfg.max_power, [0.1, 0.01])
    np.testing.assert_allclose(cfg.i_max, [1e-10, 1e-9, 1e-8])


def test_wrong_length_override_rejected():
    doc = default_scenario(network={"users": 2})
    doc["radio"]["max_power_dbm"] = [20.0, 10.0, 0.0]
    with pytest.raises(ScenarioError, match="max_power_dbm"):
        load_scenario(doc)


def test_yaml_text_and_file(tmp_path):
    text = """
network: {users: 2, subcarriers: 2}
radio: {max_power_dbm: 0, noise_dbm: -100}
pu: {power_dbm: 30, gain_db: -60, i_max_dbm: -70}
pricing: {flat: lp, lambda0: 0.5}
"""
    a = load_scenario(text)
    path = tmp_path / "s.yaml"
    path.write_text(text)
    b = load_scenario(str(path))
    np.testing.assert_array_equal(a.noise, b.noise)
    assert a.pu_gain == pytest.approx(1e-6)
    assert a.pricing == b.pricing


def test_loading_is_deterministic():
    a, b = load_scenario(default_scenario()), load_scenario(default_scenario())
    for name in ("max_power", "noise", "i_max"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.pu_gain == b.pu_gain and a.pricing == b.pricing


def test_default_scenario_is_a_copy():
    doc = default_scenario(pricing={"flat": "lp"})
    doc["network"]["users"] = 99
    assert DEFAULT_SCENARIO["network"]["users"] == 10
    assert DEFAULT_SCENARIO["pricing"]["flat"] == "vp"


def test_pricing_spec_validation():
    with pytest.raises(ScenarioError):
        PricingSpec(lambda_k=[-1.0, 1.0])
    with pytest.raises(ScenarioError):
        PricingSpec(user_model="vp", user_basis="power")
    with pytest.raises(ScenarioError):
        PricingSpec(lambda_k=[1.0, 2.0]).user_lambdas(3)
    np.testing.assert_array_equal(PricingSpec(lambda_k=0.5).user_lambdas(3), [0.5] * 3)
