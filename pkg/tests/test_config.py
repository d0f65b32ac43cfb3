"""Config schema: defaults, validation paths, hashing, YAML loading."""

import pytest

from accel_eval.config import (
    ConfigError,
    config_digest,
    default_config_dict,
    load_config,
    parse_config,
)
from accel_eval.estimation import ConfidenceSpec
from accel_eval.plant import AvConfig
from accel_eval.scenario import ProposalParams

# Least-squares exponential mean of the default inverse-range law; also
# frozen in test_distributions.py.
DEFAULT_SURROGATE_MEAN = 0.020602124910224576


def test_minimal_config_fills_defaults():
    cfg = parse_config({"seed": 7})
    assert cfg.seed == 7
    assert cfg.events == ("conflict",)
    assert cfg.modes == ("is",)
    assert cfg.bins == ("low", "medium", "high")
    assert cfg.n_cap == 200000
    assert cfg.workers == 1
    assert cfg.plant == AvConfig()
    assert cfg.confidence == ConfidenceSpec(0.2, 0.2)
    assert cfg.injury.delta_v_unit == "m/s"
    assert cfg.r_lc == 7.64
    assert cfg.ce_iterations == 10
    assert cfg.ce_n_per_iter == {"conflict": 100, "crash": 500}
    assert cfg.check_every == 50 and cfg.min_samples == 100
    assert cfg.warm_start == {}
    # The surrogate mean is resolved into the hashed settings.
    assert cfg.resolved["model"]["exp_approx_mean"] == DEFAULT_SURROGATE_MEAN
    assert cfg.resolved["seed"] == 7


def test_seed_is_required_and_validated():
    with pytest.raises(ConfigError, match="seed: required"):
        parse_config({})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"seed": -1})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"seed": 1 << 64})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"seed": True})
    with pytest.raises(ConfigError, match="seed"):
        parse_config({"seed": 3.5})
    parse_config({"seed": (1 << 64) - 1})  # top of the range is legal


def test_unknown_keys_report_their_full_path():
    with pytest.raises(ConfigError, match="plnt: unknown key"):
        parse_config({"seed": 1, "plnt": {}})
    with pytest.raises(ConfigError, match=r"plant\.bogus: unknown key"):
        parse_config({"seed": 1, "plant": {"bogus": 1.0}})
    with pytest.raises(ConfigError, match=r"model\.inverse_range\.kk"):
        parse_config({"seed": 1, "model": {"inverse_range": {"kk": 0.5}}})


def test_events_and_modes_validation():
    cfg = parse_config({"seed": 1, "events": ["conflict", "crash", "injury"]})
    assert cfg.events == ("conflict", "crash", "injury")
    with pytest.raises(ConfigError, match="events"):
        parse_config({"seed": 1, "events": ["collision"]})
    with pytest.raises(ConfigError, match="events"):
        parse_config({"seed": 1, "events": ["conflict", "conflict"]})
    with pytest.raises(ConfigError, match="events"):
        parse_config({"seed": 1, "events": []})
    cfg = parse_config({"seed": 1, "modes": ["cmc", "is"]})
    assert cfg.modes == ("cmc", "is")
    with pytest.raises(ConfigError, match="modes"):
        parse_config({"seed": 1, "modes": ["mc"]})
    with pytest.raises(ConfigError, match="modes"):
        parse_config({"seed": 1, "modes": []})


def test_bins_expansion_and_validation():
    cfg = parse_config({"seed": 1, "bins": ["high", "low"]})
    assert cfg.bins == ("high", "low")  # caller order preserved
    with pytest.raises(ConfigError, match="bins"):
        parse_config({"seed": 1, "bins": ["urban"]})
    with pytest.raises(ConfigError, match="bins"):
        parse_config({"seed": 1, "bins": ["low", "low"]})
    with pytest.raises(ConfigError, match="bins"):
        parse_config({"seed": 1, "bins": []})
    # A bin past the top of the velocity support carries no mass.
    bins = [
        {"name": "low", "lo": 5.0, "hi": 15.0},
        {"name": "mid", "lo": 15.0, "hi": 40.0},
        {"name": "top", "lo": 40.0, "hi": 45.0},
    ]
    with pytest.raises(ConfigError, match="no probability mass"):
        parse_config({"seed": 1, "model": {"velocity_bins": bins}, "bins": ["top"]})


def test_warm_start_round_trip_and_defaults():
    data = {
        "seed": 1,
        "warm_start": {
            "conflict": {"high": {"vartheta_r": -0.1, "vartheta_ttc": -0.01}},
            "crash": {"low": {"vartheta_ttc": -0.5}},
        },
    }
    cfg = parse_config(data)
    assert cfg.warm_start["conflict"]["high"] == ProposalParams(-0.1, -0.01, "high")
    # Omitted tilt defaults to zero.
    assert cfg.warm_start["crash"]["low"] == ProposalParams(0.0, -0.5, "low")


def test_warm_start_violations_name_the_path():
    # A positive tilt at or above the bin's smallest inverse-TTC mean
    # would push a proposal mean to zero or below.
    with pytest.raises(ConfigError, match=r"warm_start\.conflict\.high"):
        parse_config(
            {"seed": 1, "warm_start": {"conflict": {"high": {"vartheta_ttc": 0.05}}}}
        )
    with pytest.raises(ConfigError, match=r"warm_start\.wreck"):
        parse_config({"seed": 1, "warm_start": {"wreck": {}}})
    with pytest.raises(ConfigError, match=r"warm_start\.crash\.urban"):
        parse_config({"seed": 1, "warm_start": {"crash": {"urban": {}}}})
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"seed": 1, "warm_start": {"crash": {"low": {"theta": 1.0}}}})


def test_count_bounds():
    with pytest.raises(ConfigError, match="n_cap"):
        parse_config({"seed": 1, "n_cap": 50})  # below min_samples
    with pytest.raises(ConfigError, match="check_every"):
        parse_config({"seed": 1, "stopping": {"check_every": 0}})
    with pytest.raises(ConfigError, match="min_samples"):
        parse_config({"seed": 1, "stopping": {"min_samples": 1}})
    with pytest.raises(ConfigError, match="workers"):
        parse_config({"seed": 1, "workers": 0})
    with pytest.raises(ConfigError, match="iterations"):
        parse_config({"seed": 1, "cross_entropy": {"iterations": 0}})
    with pytest.raises(ConfigError, match=r"n_per_iter\.crash"):
        parse_config({"seed": 1, "cross_entropy": {"n_per_iter": {"crash": 0}}})
    with pytest.raises(ConfigError, match="n_per_iter"):
        parse_config({"seed": 1, "cross_entropy": {"n_per_iter": {"injury": 5}}})
    # Partial n_per_iter keeps the other default.
    cfg = parse_config({"seed": 1, "cross_entropy": {"n_per_iter": {"crash": 50}}})
    assert cfg.ce_n_per_iter == {"conflict": 100, "crash": 50}


def test_workers_excluded_from_resolved_settings():
    a = parse_config({"seed": 1, "workers": 1})
    b = parse_config({"seed": 1, "workers": 8})
    assert a.workers == 1 and b.workers == 8
    assert "workers" not in a.resolved
    assert a.resolved == b.resolved
    assert config_digest(a.resolved) == config_digest(b.resolved)


def test_component_errors_carry_section_prefix():
    with pytest.raises(ConfigError, match="plant"):
        parse_config({"seed": 1, "plant": {"ts": -0.1}})
    with pytest.raises(ConfigError, match="confidence"):
        parse_config({"seed": 1, "confidence": {"alpha": 1.5}})
    with pytest.raises(ConfigError, match="injury"):
        parse_config({"seed": 1, "injury": {"delta_v_unit": "mph"}})
    with pytest.raises(ConfigError, match="r_lc"):
        parse_config({"seed": 1, "r_lc": 0.0})
    with pytest.raises(ConfigError, match="inverse_range"):
        parse_config({"seed": 1, "model": {"inverse_range": {"sigma": -1.0}}})


def test_exp_approx_mean_checked_against_recomputation():
    cfg = parse_config({"seed": 1, "model": {"exp_approx_mean": DEFAULT_SURROGATE_MEAN}})
    assert cfg.model.r_inv_exp_mean == DEFAULT_SURROGATE_MEAN
    with pytest.raises(ConfigError, match="model"):
        parse_config({"seed": 1, "model": {"exp_approx_mean": 0.5}})


def test_load_config_yaml_and_overrides(tmp_path):
    p = tmp_path / "exp.yaml"
    p.write_text("events: [conflict, crash]\nplant:\n  ts: 0.05\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="seed"):
        load_config(str(p))
    cfg = load_config(str(p), overrides={"seed": 99, "n_cap": None})
    assert cfg.seed == 99
    assert cfg.events == ("conflict", "crash")
    assert cfg.plant.ts == 0.05
    assert cfg.n_cap == 200000  # None overrides are skipped

    bad = tmp_path / "bad.yaml"
    bad.write_text("events: [unterminated\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(str(bad))

    seq = tmp_path / "seq.yaml"
    seq.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="expected a mapping"):
        load_config(str(seq))

    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ConfigError, match="seed"):
        load_config(str(empty))


def test_config_digest_is_order_insensitive_and_value_sensitive():
    a = parse_config({"seed": 5, "n_cap": 1000, "events": ["crash"]})
    b = parse_config({"events": ["crash"], "n_cap": 1000, "seed": 5})
    assert config_digest(a.resolved) == config_digest(b.resolved)
    assert len(config_digest(a.resolved)) == 64
    c = parse_config({"seed": 5, "n_cap": 1001, "events": ["crash"]})
    assert config_digest(c.resolved) != config_digest(a.resolved)
    d = parse_config({"seed": 6, "n_cap": 1000, "events": ["crash"]})
    assert config_digest(d.resolved) != config_digest(a.resolved)


def test_default_dict_is_a_fresh_copy():
    d1 = default_config_dict()
    d1["plant"]["ts"] = 123.0
    assert default_config_dict()["plant"]["ts"] == 0.1
