"""Named scenarios.

``closed-loop``: ring of 10 vehicles, agent slots (even ids) interleaved
with IDM drivers, everyone starting from rest.

``perturbation``: straight road; an IDM leader forced along a speed profile,
10 vehicles under test, and an IDM tail.  Every controller starts from the
same layout: IDM equilibrium clearance at the profile's base speed.

``smoke``: small ring with one agent and four IDM drivers, starting at
15 m/s.  From rest, the early random-policy episodes nearly always end in a
crash and the short runs learn little beyond that.
"""
from __future__ import annotations

import math
from dataclasses import replace

from .controllers import BcmGains, ControllerConfig, IdmParams, idm_equilibrium_gap
from .sim import DEFAULT_LENGTH, ConfigError, OpenChain, PerturbationProfile, Ring, ScenarioConfig, VehicleSpec

PRESETS = ("closed-loop", "perturbation", "smoke")

CLOSED_LOOP_TRACK = 360.0
PERTURBATION_ROAD = 10_000.0


def _ring(n, track_length, tags, speed, length=DEFAULT_LENGTH):
    spacing = track_length / n
    return tuple(
        VehicleSpec(tag, (track_length - i * spacing) % track_length, speed, length)
        for i, tag in enumerate(tags)
    )


def closed_loop(controller="rl", n_vehicles=10, n_agents=5, track_length=CLOSED_LOOP_TRACK,
                steps=3600, seed=0, controllers=None, target_headway=1.26, target_speed=20.0,
                initial_speed=0.0, position_jitter=1.0, dt=0.1):
    """Agent slots take ``controller``; the remaining vehicles are IDM."""
    if not 0 <= n_agents <= n_vehicles:
        raise ConfigError("need 0 <= n_agents <= n_vehicles")
    slots = agent_slots(n_vehicles, n_agents)
    tags = [controller if i in slots else "idm" for i in range(n_vehicles)]
    controllers = controllers or default_controllers(target_headway)
    return ScenarioConfig(
        topology=Ring(track_length),
        vehicles=_ring(n_vehicles, track_length, tags, initial_speed),
        dt=dt, steps=steps, target_speed=target_speed, target_headway=target_headway,
        seed=seed, position_jitter=position_jitter, controllers=controllers,
    )


def agent_slots(n_vehicles, n_agents):
    """Interleave agents with human drivers: every other slot from 0."""
    stride = max(1, n_vehicles // max(n_agents, 1))
    return tuple(range(0, stride * n_agents, stride))[:n_agents]


# DDPG settings under which the 20 x 600-step smoke run learns reliably
SMOKE_TRAIN = {"episodes": 20, "steps": 600, "gamma": 0.95, "batch_size": 256}


def smoke(steps=600, seed=0, controllers=None, track_length=200.0, initial_speed=15.0,
          position_jitter=1.0, target_headway=1.26, dt=0.1):
    controllers = controllers or default_controllers(target_headway)
    tags = ["rl", "idm", "idm", "idm", "idm"]
    return ScenarioConfig(
        topology=Ring(track_length),
        vehicles=_ring(len(tags), track_length, tags, initial_speed),
        dt=dt, steps=steps, target_headway=target_headway, seed=seed,
        position_jitter=position_jitter, controllers=controllers,
    )


def perturbation(controller="bcm", n_controlled=10, profile=None, steps=3600, seed=0,
                 controllers=None, target_headway=1.26, road_length=PERTURBATION_ROAD, dt=0.1):
    profile = profile or PerturbationProfile()
    controllers = controllers or default_controllers(target_headway)
    v = profile.base_speed
    tags = ["idm"] + [controller] * n_controlled + ["idm"]
    # one layout for every tested controller so runs are directly comparable
    gaps = [idm_equilibrium_gap(v, controllers.idm)] * (n_controlled + 1)
    span = sum(gaps) + DEFAULT_LENGTH * len(gaps)
    head = span + 100.0
    travel = v * steps * dt + (profile.amplitude * profile.period / math.pi if profile.waveform == "sinusoid" else 0.0)
    if head + travel > road_length:
        raise ConfigError(f"road of {road_length} m too short for {steps} steps at {v} m/s")
    pos = [head]
    for g in gaps:
        pos.append(pos[-1] - g - DEFAULT_LENGTH)
    vehicles = tuple(VehicleSpec(tag, x, v) for tag, x in zip(tags, pos))
    return ScenarioConfig(
        topology=OpenChain(road_length), vehicles=vehicles, dt=dt, steps=steps,
        target_speed=v, target_headway=target_headway, perturbation=profile,
        seed=seed, controllers=controllers,
    )


def default_controllers(target_headway=1.26, **overrides):
    """Controller defaults with every headway-type parameter at ``target_headway``."""
    cfg = ControllerConfig(
        idm=IdmParams(time_headway=target_headway),
        bcm=BcmGains(reaction_time=target_headway),
        unilateral=BcmGains(reaction_time=target_headway),
    )
    return replace(cfg, **overrides) if overrides else cfg


def build(name, controller=None, **kw):
    """``(scenario, measured_vehicle_ids)`` for a named preset."""
    if name == "closed-loop":
        sc = closed_loop(controller or "rl", **kw)
        return sc, list(agent_slots(len(sc.vehicles), kw.get("n_agents", 5)))
    if name == "perturbation":
        sc = perturbation(controller or "bcm", **kw)
        return sc, list(range(1, len(sc.vehicles) - 1))
    if name == "smoke":
        sc = smoke(**kw)
        if controller not in (None, "rl"):
            sc = sc.with_controller([0], controller)
        return sc, [0]
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
