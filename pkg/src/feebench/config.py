"""YAML experiment configuration.

Recognized keys (all optional; unknown keys are rejected together):

    profile: paper | extended        # starting point for everything below
    population: int
    beta_levels: [float, ...]
    windows: [int, ...]
    trajectories: [increasing, decreasing, converging, diverging]
    include_static: bool
    target_counts: [int, ...]
    trajectory_repeats: int
    price_offset: float
    agent: rational | heuristic | gateway
    heuristic: {center_pull, anchor_weight, trend_weight, p_max}
    gateway: {endpoint, model, temperature, max_tokens, timeout_s,
              max_attempts, api_key_env}
    master_seed: int
"""

from __future__ import annotations

import dataclasses

import yaml

from .agents import GatewayConfig, HeuristicParams
from .game import TrajectoryKind
from .orchestrator import ExperimentConfig

_PROFILES = {
    "paper": ExperimentConfig.paper_profile,
    "extended": ExperimentConfig.extended_profile,
}

_SCALAR_KEYS = {
    "population": int,
    "trajectory_repeats": int,
    "master_seed": int,
    "price_offset": float,
    "include_static": bool,
}


class ConfigError(Exception):
    pass


def config_from_mapping(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    errors = []

    profile = data.pop("profile", "paper")
    if profile not in _PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(_PROFILES)}")
    config = _PROFILES[profile]()

    updates = {}
    for key, cast in _SCALAR_KEYS.items():
        if key in data:
            try:
                updates[key] = cast(data.pop(key))
            except (TypeError, ValueError) as exc:
                errors.append(f"{key}: {exc}")
    for key in ("beta_levels", "target_counts", "windows"):
        if key in data:
            try:
                cast = int if key != "beta_levels" else float
                updates[key] = tuple(cast(v) for v in data.pop(key))
            except (TypeError, ValueError) as exc:
                errors.append(f"{key}: {exc}")
    if "trajectories" in data:
        try:
            updates["dynamic_kinds"] = tuple(
                TrajectoryKind(v) for v in data.pop("trajectories")
            )
        except ValueError as exc:
            errors.append(f"trajectories: {exc}")
    if "agent" in data:
        agent = data.pop("agent")
        if agent not in ("rational", "heuristic", "gateway"):
            errors.append(f"agent: unknown kind {agent!r}")
        else:
            updates["agent_kind"] = agent
    if "heuristic" in data:
        try:
            updates["heuristic"] = HeuristicParams(**(data.pop("heuristic") or {}))
        except (TypeError, ValueError) as exc:
            errors.append(f"heuristic: {exc}")
    if "gateway" in data:
        try:
            updates["gateway"] = GatewayConfig(**(data.pop("gateway") or {}))
        except (TypeError, ValueError) as exc:
            errors.append(f"gateway: {exc}")

    for key in sorted(data):
        errors.append(f"{key}: unrecognized key")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return dataclasses.replace(config, **updates)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data or {})
