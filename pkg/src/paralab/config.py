"""Experiment configuration: YAML merged over the shipped defaults, checked against a JSON schema."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from paralab.experiments import EXPERIMENT_IDS


class ConfigError(ValueError):
    """The configuration is malformed or violates a module precondition."""


def _data(name: str) -> str:
    return resources.files("paralab").joinpath("data", name).read_text()


def defaults() -> dict:
    return yaml.safe_load(_data("defaults.yaml"))


def schema() -> dict:
    return json.loads(_data("schema.json"))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _cross_checks(cfg: dict) -> None:
    e = cfg["experiments"]
    if e["heat-kernel-scaling"]["T_min"] >= e["heat-kernel-scaling"]["T_max"]:
        raise ConfigError("heat-kernel-scaling: T_min must be below T_max")
    if e["semi-ns-energy"]["n"] < 8 or e["semi-ns-decay"]["n"] < 8:
        raise ConfigError("semi Navier-Stokes grids need n >= 8")


def validate(cfg: dict) -> dict:
    """Validate a full configuration; raises ``ConfigError`` before any compute."""
    if isinstance(cfg.get("experiments"), dict):
        unknown = sorted(set(cfg["experiments"]) - set(EXPERIMENT_IDS))
        if unknown:
            raise ConfigError(f"unknown experiment id(s): {', '.join(unknown)}")
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    _cross_checks(cfg)
    return cfg


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file at ``path``, then ``overrides``; validated."""
    cfg = defaults()
    if path is not None:
        user = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def selected_ids(cfg: dict, only: list[str] | None = None) -> list[str]:
    """Experiment ids to run, in canonical order."""
    chosen = cfg["experiments_to_run"]
    ids = list(EXPERIMENT_IDS) if chosen == "all" else list(chosen)
    if only:
        bad = sorted(set(only) - set(EXPERIMENT_IDS))
        if bad:
            raise ConfigError(f"unknown experiment id(s): {', '.join(bad)}")
        ids = [i for i in ids if i in only] if chosen != "all" else [i for i in EXPERIMENT_IDS if i in only]
    return ids
