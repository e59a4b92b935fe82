"""Scenario configuration files: YAML documents validated against a schema.

A config file has a `system` section (topology sizes, service budgets,
security thresholds, plant coefficients) and an optional `scenarios`
section overriding sweep values per scenario id. All fields are optional;
defaults come from SystemConfig.
"""

from __future__ import annotations

import jsonschema
import yaml

from .errors import ConfigInvalid
from .scenarios import SystemConfig

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_local": {"type": "integer", "minimum": 1},
                "switches_per_local": {"type": "integer", "minimum": 1},
                "hosts_per_switch": {"type": "integer", "minimum": 1},
                "partitions": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "control_period": {"type": "integer", "minimum": 1},
                "local_service": {"type": "integer", "minimum": 1},
                "global_service": {"type": ["integer", "null"], "minimum": 1},
                "heartbeat_period": {"type": "integer", "minimum": 1},
                "heartbeat_miss_limit": {"type": "integer", "minimum": 1},
                "flows_outstanding": {"type": ["integer", "null"], "minimum": 1},
                "rate_threshold": {"type": "integer", "minimum": 1},
                "detect_window": {"type": "integer", "minimum": 1},
                "denial_threshold": {"type": "integer", "minimum": 1},
                "cooldown": {"type": "integer", "minimum": 1},
                "cache_capacity": {"type": "integer", "minimum": 1},
                "plant_a": {"type": "number"},
                "plant_b": {"type": "number"},
                "plant_gain": {"type": "number"},
            },
        },
        "scenarios": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                sc: {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "sweep": {"type": "array", "minItems": 1},
                        "sim_time": {"type": "integer", "minimum": 1},
                        "requests": {"type": "integer", "minimum": 1},
                    },
                } for sc in ("Sc1", "Sc2", "Sc3", "Sc4")
            },
        },
    },
}


def load_config(path: str) -> dict:
    """Parse and schema-validate a YAML config file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigInvalid(f"config schema violation: {exc.message}") from exc
    return raw


def system_config_from(raw: dict, seed: int | None = None) -> SystemConfig:
    kw = dict(raw.get("system", {}))
    if seed is not None:
        kw["seed"] = seed
    cfg = SystemConfig(**kw)
    cfg.validate()
    return cfg


def scenario_overrides(raw: dict, scenario_id: str) -> dict:
    return dict(raw.get("scenarios", {}).get(scenario_id, {}))
