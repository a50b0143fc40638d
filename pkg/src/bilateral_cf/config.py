"""Hierarchical run configuration.

A TOML file supplies any subset of the keys in ``DEFAULTS``; command-line
flags named after dotted keys (``--reward.sigma 0.5``) override it.  ``None``
defaults mean "derive from context", e.g. the IDM time headway follows
``scenario.target_headway``.
"""
from __future__ import annotations

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controllers import BcmGains, ControllerConfig, GippsParams, IdmParams
from .learner import TrainConfig
from .presets import SMOKE_TRAIN, build
from .reward import EffParams, RewardConfig, RewardWeights, retarget_u
from .sim import ConfigError, PerturbationProfile

DEFAULTS = {
    "scenario": {
        "preset": "closed-loop",
        "controller": None,
        "seed": 0,
        "steps": None,
        "dt": 0.1,
        "target_speed": 20.0,
        "target_headway": 1.26,
        "initial_speed": None,
        "position_jitter": None,
        "track_length": None,
        "n_vehicles": 10,
        "n_agents": 5,
        "n_controlled": 10,
        "road_length": None,
    },
    "perturbation": {
        "waveform": "sinusoid",
        "base_speed": 20.0,
        "amplitude": 2.0,
        "period": 60.0,
        "drop": 5.0,
        "duration": 10.0,
        "start": 30.0,
    },
    "controllers": {
        "clip_classical": False,
        "idm": {"desired_speed": 30.0, "max_accel": 1.4, "comfortable_decel": 2.0,
                "time_headway": None, "jam_distance": 2.0, "delta": 4.0},
        "gipps": {"desired_speed": 30.0, "max_accel": 3.0, "comfortable_decel": 3.0,
                  "reaction_time": 1.0},
        "bcm": {"kd": 0.5, "kv": 1.0, "reaction_time": None},
        "unilateral": {"kd": 0.5, "kv": 1.0, "reaction_time": None},
        "rl": {"checkpoint": None, "variant": "bilateral"},
    },
    "reward": {
        "weights": {"safety": 1.0, "efficiency": 1.0, "comfort": 1.0},
        "target_headway": None,
        "u": 0.4226,
        "sigma": 0.4365,
        "collision_penalty": -50.0,
    },
    "train": {
        "episodes": 120,
        "steps": 3600,
        "gamma": 0.99,
        "tau": 0.005,
        "batch_size": 64,
        "actor_lr": 1e-4,
        "critic_lr": 1e-3,
        "noise": 0.3,
        "noise_decay": 0.995,
        "buffer_capacity": 100_000,
        "hidden": [64, 64],
        "warmup": 0,
        "updates_per_step": 1,
    },
}


def _merge(base, update, path=""):
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} is a table, got {value!r}")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def set_dotted(cfg, dotted, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def parse_value(text):
    """Read a flag value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load(path=None, overrides=()):
    """Resolve defaults <- file <- ``(dotted_key, value)`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        _merge(cfg, data)
    for key, value in overrides:
        set_dotted(cfg, key, value)
    return cfg


def controller_config(cfg):
    c = cfg["controllers"]
    h = cfg["scenario"]["target_headway"]
    idm = dict(c["idm"])
    idm["time_headway"] = idm["time_headway"] or h
    bcm = dict(c["bcm"])
    bcm["reaction_time"] = bcm["reaction_time"] or h
    uni = dict(c["unilateral"])
    uni["reaction_time"] = uni["reaction_time"] or h
    try:
        return ControllerConfig(
            gipps=GippsParams(**c["gipps"]), idm=IdmParams(**idm),
            bcm=BcmGains(**bcm), unilateral=BcmGains(**uni),
            clip_classical=bool(c["clip_classical"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def profile_config(cfg):
    return PerturbationProfile(**cfg["perturbation"])


def scenario_config(cfg):
    """``(ScenarioConfig, measured_vehicle_ids)`` for the resolved config.

    An unset ``scenario.steps`` is filled in place with the preset's default
    so the recorded config names the episode length actually run.
    """
    s = cfg["scenario"]
    preset = s["preset"]
    if s["steps"] is None:
        s["steps"] = SMOKE_TRAIN["steps"] if preset == "smoke" else 3600
    kw = {
        "seed": int(s["seed"]),
        "steps": s["steps"],
        "controllers": controller_config(cfg),
        "target_headway": s["target_headway"],
        "dt": s["dt"],
    }
    if preset in ("closed-loop", "smoke"):
        for key in ("initial_speed", "position_jitter", "track_length"):
            if s[key] is not None:
                kw[key] = s[key]
        if preset == "closed-loop":
            kw.update(n_vehicles=s["n_vehicles"], n_agents=s["n_agents"], target_speed=s["target_speed"])
    elif preset == "perturbation":
        kw.update(profile=profile_config(cfg), n_controlled=s["n_controlled"])
        if s["road_length"] is not None:
            kw["road_length"] = s["road_length"]
    return build(preset, s["controller"], **kw)


def reward_config(cfg):
    r = cfg["reward"]
    w = RewardWeights(**r["weights"])
    u = r["u"] if r["target_headway"] is None else retarget_u(r["target_headway"], r["sigma"])
    return RewardConfig(weights=w, eff=EffParams(u=u, sigma=r["sigma"]),
                        collision_penalty=r["collision_penalty"])


def train_config(cfg):
    t = dict(cfg["train"])
    t["hidden"] = tuple(t["hidden"])
    try:
        return TrainConfig(seed=int(cfg["scenario"]["seed"]), **t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
