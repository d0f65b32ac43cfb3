"""Experiment configuration: YAML schema, defaults, validation, hashing.

A config file only needs the keys it wants to change; everything else
falls back to the defaults below.  Unknown keys are rejected with their
full path so typos cannot silently disable a setting.  The resolved
(defaults-applied) mapping is what gets hashed into the report, so two
runs with the same effective settings carry the same config digest.

The default scenario-model numbers are synthetic placeholders shaped to
look like naturalistic lane-change statistics (conflict probability on
the order of 1e-2 in the low-speed bin).  Fit real data with the ``fit``
subcommand before drawing conclusions about a real system.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import Any

import yaml

from .distributions import EmpiricalDist, TruncatedPareto
from .estimation import ConfidenceSpec, InjuryModel
from .plant import AvConfig
from .scenario import ProposalParams, ScenarioModel, VelocityBin

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "default_config_dict",
    "parse_config",
    "load_config",
    "config_digest",
]

EVENTS = ("conflict", "crash", "injury")
MODES = ("cmc", "is")

_V_EDGES = [float(v) for v in range(2, 41, 2)]
_V_WEIGHTS = [1, 2, 4, 7, 9, 8, 6, 4, 3, 3, 4, 6, 8, 9, 8, 6, 4, 2, 1]
_V_MASS = [w / sum(_V_WEIGHTS) for w in _V_WEIGHTS]

_R_INV_LO = 1.0 / 75.0  # 1/m, ranges past 75 m are no longer a cut-in ahead
_R_INV_HI = 1.0 / 0.1  # 1/m, ranges under 0.1 m are already contact


def default_config_dict() -> dict[str, Any]:
    """Fresh copy of the full default configuration (seed intentionally absent)."""
    return {
        "seed": None,
        "events": ["conflict"],
        "modes": ["is"],
        "bins": ["all"],
        "n_cap": 200000,
        "workers": 1,
        "confidence": {"alpha": 0.2, "beta": 0.2},
        "model": {
            "velocity": {"bin_edges": list(_V_EDGES), "bin_mass": list(_V_MASS)},
            "inverse_range": {
                "k": 0.02,
                "sigma": 0.0205,
                "theta": _R_INV_LO,
                "lo": _R_INV_LO,
                "hi": _R_INV_HI,
            },
            "exp_approx_mean": None,
            "ttc_lambda": {
                "table": [
                    [5.0, 0.12],
                    [10.0, 0.10],
                    [15.0, 0.085],
                    [20.0, 0.07],
                    [25.0, 0.06],
                    [30.0, 0.05],
                    [35.0, 0.045],
                ],
                "floor": 0.01,
            },
            "velocity_bins": [
                {"name": "low", "lo": 5.0, "hi": 15.0},
                {"name": "medium", "lo": 15.0, "hi": 25.0},
                {"name": "high", "lo": 25.0, "hi": 40.0},
            ],
        },
        "plant": {
            "t_hw_desired": 2.0,
            "a_acc_max": 5.0,
            "kp_acc": -38.6,
            "ki_acc": -1.35,
            "a_aeb": 10.0,
            "r_aeb": -16.0,
            "tau_av": 0.0796,
            "ts": 0.1,
            "t_lc_max": 8.0,
            "ttc_aeb_schedule": [[5.0, 1.0], [15.0, 1.3], [25.0, 1.5], [40.0, 1.5]],
            "r_conflict": 9.144,
            "error_sign": -1.0,
        },
        "injury": {"b0": -6.068, "b1": 0.1, "b2": -0.6234, "delta_v_unit": "m/s"},
        "r_lc": 7.64,
        "cross_entropy": {
            "iterations": 10,
            "n_per_iter": {"conflict": 100, "crash": 500},
        },
        "stopping": {"check_every": 50, "min_samples": 100},
        "warm_start": {},
    }


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key path."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved experiment settings."""

    seed: int
    events: tuple[str, ...]
    modes: tuple[str, ...]
    bins: tuple[str, ...]
    n_cap: int
    workers: int
    model: ScenarioModel
    plant: AvConfig
    confidence: ConfidenceSpec
    injury: InjuryModel
    r_lc: float
    ce_iterations: int
    ce_n_per_iter: dict[str, int]
    check_every: int
    min_samples: int
    warm_start: dict[str, dict[str, ProposalParams]]
    resolved: dict[str, Any]


def _require_map(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
    return value


def _merge(base: dict, override: dict, path: str) -> dict:
    """Override defaults key by key; unknown keys are an error."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(f"{here}: unknown key")
        if isinstance(base[key], dict) and key not in ("warm_start", "n_per_iter"):
            out[key] = _merge(base[key], _require_map(value, here), here)
        else:
            out[key] = copy.deepcopy(value)
    return out

def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _pairs(value, path: str) -> list[tuple[float, float]]:
    if not isinstance(value, (list, tuple)) or any(
        not isinstance(p, (list, tuple)) or len(p) != 2 for p in value
    ):
        raise ConfigError(f"{path}: expected a list of [x, y] pairs")
    return [(_number(p[0], path), _number(p[1], path)) for p in value]


def _build_model(section: dict, path: str) -> ScenarioModel:
    vel = section["velocity"]
    try:
        v_dist = EmpiricalDist(vel["bin_edges"], vel["bin_mass"])
    except ValueError as e:
        raise ConfigError(f"{path}.velocity: {e}") from e
    inv = section["inverse_range"]
    try:
        r_inv_dist = TruncatedPareto(
            _number(inv["k"], f"{path}.inverse_range.k"),
            _number(inv["sigma"], f"{path}.inverse_range.sigma"),
            _number(inv["theta"], f"{path}.inverse_range.theta"),
            _number(inv["lo"], f"{path}.inverse_range.lo"),
            _number(inv["hi"], f"{path}.inverse_range.hi"),
        )
    except ValueError as e:
        raise ConfigError(f"{path}.inverse_range: {e}") from e
    ttc = section["ttc_lambda"]
    bins = []
    for i, b in enumerate(section["velocity_bins"]):
        bpath = f"{path}.velocity_bins[{i}]"
        b = _require_map(b, bpath)
        unknown = set(b) - {"name", "lo", "hi"}
        if unknown:
            raise ConfigError(f"{bpath}: unknown key(s) {sorted(unknown)}")
        try:
            bins.append(
                VelocityBin(str(b["name"]), _number(b["lo"], bpath), _number(b["hi"], bpath))
            )
        except (KeyError, ValueError) as e:
            raise ConfigError(f"{bpath}: {e}") from e
    exp_mean = section["exp_approx_mean"]
    try:
        return ScenarioModel(
            v_dist=v_dist,
            r_inv_dist=r_inv_dist,
            ttc_lambda_table=_pairs(ttc["table"], f"{path}.ttc_lambda.table"),
            bins=bins,
            r_inv_exp_mean=None if exp_mean is None else _number(exp_mean, f"{path}.exp_approx_mean"),
            lambda_floor=_number(ttc["floor"], f"{path}.ttc_lambda.floor"),
        )
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping against the schema and build the runtime objects."""
    resolved = _merge(default_config_dict(), _require_map(data, ""), "")

    if resolved["seed"] is None:
        raise ConfigError("seed: required (explicit seeding keeps runs reproducible)")
    seed = _integer(resolved["seed"], "seed")
    if not 0 <= seed < 1 << 64:
        raise ConfigError(f"seed: must lie in [0, 2^64), got {seed}")

    model = _build_model(_require_map(resolved["model"], "model"), "model")
    resolved["model"]["exp_approx_mean"] = model.r_inv_exp_mean

    events = list(resolved["events"])
    if not events or len(set(events)) != len(events) or any(e not in EVENTS for e in events):
        raise ConfigError(f"events: expected distinct entries from {list(EVENTS)}, got {events}")
    modes = list(resolved["modes"])
    if not modes or len(set(modes)) != len(modes) or any(m not in MODES for m in modes):
        raise ConfigError(f"modes: expected distinct entries from {list(MODES)}, got {modes}")

    bin_names = [b.name for b in model.bins]
    bins = list(resolved["bins"])
    if bins == ["all"]:
        bins = bin_names
    if not bins or len(set(bins)) != len(bins) or any(b not in bin_names for b in bins):
        raise ConfigError(f"bins: expected 'all' or distinct entries from {bin_names}, got {bins}")
    for name in bins:
        b = model.bin_named(name)
        if model.v_dist.mass_in_range(b.lo, b.hi) <= 0.0:
            raise ConfigError(f"bins: velocity bin {name!r} carries no probability mass")

    try:
        plant = AvConfig(
            t_hw_desired=_number(resolved["plant"]["t_hw_desired"], "plant.t_hw_desired"),
            a_acc_max=_number(resolved["plant"]["a_acc_max"], "plant.a_acc_max"),
            kp_acc=_number(resolved["plant"]["kp_acc"], "plant.kp_acc"),
            ki_acc=_number(resolved["plant"]["ki_acc"], "plant.ki_acc"),
            a_aeb=_number(resolved["plant"]["a_aeb"], "plant.a_aeb"),
            r_aeb=_number(resolved["plant"]["r_aeb"], "plant.r_aeb"),
            tau_av=_number(resolved["plant"]["tau_av"], "plant.tau_av"),
            ts=_number(resolved["plant"]["ts"], "plant.ts"),
            t_lc_max=_number(resolved["plant"]["t_lc_max"], "plant.t_lc_max"),
            ttc_aeb_schedule=tuple(_pairs(resolved["plant"]["ttc_aeb_schedule"], "plant.ttc_aeb_schedule")),
            r_conflict=_number(resolved["plant"]["r_conflict"], "plant.r_conflict"),
            error_sign=_number(resolved["plant"]["error_sign"], "plant.error_sign"),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"plant: {e}") from e

    try:
        confidence = ConfidenceSpec(
            alpha=_number(resolved["confidence"]["alpha"], "confidence.alpha"),
            beta=_number(resolved["confidence"]["beta"], "confidence.beta"),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"confidence: {e}") from e

    try:
        injury = InjuryModel(
            b0=_number(resolved["injury"]["b0"], "injury.b0"),
            b1=_number(resolved["injury"]["b1"], "injury.b1"),
            b2=_number(resolved["injury"]["b2"], "injury.b2"),
            delta_v_unit=str(resolved["injury"]["delta_v_unit"]),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"injury: {e}") from e

    r_lc = _number(resolved["r_lc"], "r_lc")
    if not r_lc > 0:
        raise ConfigError(f"r_lc: must be > 0, got {r_lc}")

    ce = resolved["cross_entropy"]
    ce_iterations = _integer(ce["iterations"], "cross_entropy.iterations")
    if ce_iterations < 1:
        raise ConfigError("cross_entropy.iterations: must be >= 1")
    npi = _require_map(ce["n_per_iter"], "cross_entropy.n_per_iter")
    unknown = set(npi) - {"conflict", "crash"}
    if unknown:
        raise ConfigError(f"cross_entropy.n_per_iter: unknown key(s) {sorted(unknown)}")
    ce_n_per_iter = {}
    for ev in ("conflict", "crash"):
        val = _integer(npi.get(ev, default_config_dict()["cross_entropy"]["n_per_iter"][ev]),
                       f"cross_entropy.n_per_iter.{ev}")
        if val < 1:
            raise ConfigError(f"cross_entropy.n_per_iter.{ev}: must be >= 1")
        ce_n_per_iter[ev] = val
    resolved["cross_entropy"]["n_per_iter"] = dict(ce_n_per_iter)

    check_every = _integer(resolved["stopping"]["check_every"], "stopping.check_every")
    min_samples = _integer(resolved["stopping"]["min_samples"], "stopping.min_samples")
    if check_every < 1:
        raise ConfigError("stopping.check_every: must be >= 1")
    if min_samples < 2:
        raise ConfigError("stopping.min_samples: must be >= 2")
    n_cap = _integer(resolved["n_cap"], "n_cap")
    if n_cap < min_samples:
        raise ConfigError(f"n_cap: must be >= stopping.min_samples ({min_samples}), got {n_cap}")
    workers = _integer(resolved["workers"], "workers")
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    # Worker count changes how batches are scheduled, never what they
    # compute, so it stays out of the hashed/reported settings.
    del resolved["workers"]

    warm_start: dict[str, dict[str, ProposalParams]] = {}
    for ev, per_bin in _require_map(resolved["warm_start"], "warm_start").items():
        if ev not in EVENTS:
            raise ConfigError(f"warm_start.{ev}: unknown event")
        warm_start[ev] = {}
        for bname, tilts in _require_map(per_bin, f"warm_start.{ev}").items():
            wpath = f"warm_start.{ev}.{bname}"
            if bname not in bin_names:
                raise ConfigError(f"{wpath}: unknown velocity bin")
            tilts = _require_map(tilts, wpath)
            unknown = set(tilts) - {"vartheta_r", "vartheta_ttc"}
            if unknown:
                raise ConfigError(f"{wpath}: unknown key(s) {sorted(unknown)}")
            p = ProposalParams(
                vartheta_r=_number(tilts.get("vartheta_r", 0.0), f"{wpath}.vartheta_r"),
                vartheta_ttc=_number(tilts.get("vartheta_ttc", 0.0), f"{wpath}.vartheta_ttc"),
                bin_name=bname,
            )
            try:
                model.validate_proposal(p)
            except ValueError as e:
                raise ConfigError(f"{wpath}: {e}") from e
            warm_start[ev][bname] = p

    return ExperimentConfig(
        seed=seed,
        events=tuple(events),
        modes=tuple(modes),
        bins=tuple(bins),
        n_cap=n_cap,
        workers=workers,
        model=model,
        plant=plant,
        confidence=confidence,
        injury=injury,
        r_lc=r_lc,
        ce_iterations=ce_iterations,
        ce_n_per_iter=ce_n_per_iter,
        check_every=check_every,
        min_samples=min_samples,
        warm_start=warm_start,
        resolved=resolved,
    )


def load_config(path: str, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Load a YAML config file, apply CLI overrides, validate."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not valid YAML: {e}") from e
    if data is None:
        data = {}
    data = _require_map(data, path)
    if overrides:
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    return parse_config(data)


def config_digest(resolved: dict[str, Any]) -> str:
    """sha256 over the canonical JSON encoding of the resolved settings."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
