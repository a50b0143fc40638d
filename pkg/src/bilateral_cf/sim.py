"""Single-lane longitudinal simulator on a ring or an open road.

Vehicles are listed front to back: vehicle ``i`` follows vehicle ``i - 1``,
and on a ring vehicle 0 follows the last one.  Internally positions are kept
unwrapped so that an overtake shows up as a non-positive gap (a collision)
instead of silently reordering the lane.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import kernels
from .controllers import TAGS, ControllerConfig, fleet_commands
from .metrics import headway_array, ttc_array
from .trajectory import StepRecord, Trajectory

log = logging.getLogger(__name__)

DEFAULT_LENGTH = 5.0


class ConfigError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Ring:
    track_length: float


@dataclass(frozen=True)
class OpenChain:
    road_length: float


@dataclass(frozen=True)
class VehicleSpec:
    controller: str
    position: float
    speed: float
    length: float = DEFAULT_LENGTH


@dataclass(frozen=True)
class PerturbationProfile:
    """Speed schedule imposed on vehicle 0.

    ``sinusoid``: ``base + amplitude * sin(2 pi t / period)``.
    ``pulse``: a single raised-cosine dip of depth ``drop`` lasting
    ``duration`` seconds from ``start``.
    """

    base_speed: float = 20.0
    waveform: str = "sinusoid"
    amplitude: float = 2.0
    period: float = 60.0
    drop: float = 5.0
    duration: float = 10.0
    start: float = 30.0

    def __post_init__(self):
        if self.waveform not in ("sinusoid", "pulse"):
            raise ConfigError(f"unknown waveform {self.waveform!r}")
        dip = self.amplitude if self.waveform == "sinusoid" else self.drop
        if self.base_speed - dip < 0:
            raise ConfigError(f"profile would demand negative speed ({self.base_speed} - {dip})")
        if self.waveform == "sinusoid" and not self.period > 0:
            raise ConfigError("sinusoid period must be positive")
        if self.waveform == "pulse" and not self.duration > 0:
            raise ConfigError("pulse duration must be positive")

    def speed_at(self, t):
        if self.waveform == "sinusoid":
            return self.base_speed + self.amplitude * math.sin(2.0 * math.pi * t / self.period)
        s = t - self.start
        if 0.0 <= s <= self.duration:
            return self.base_speed - self.drop * 0.5 * (1.0 - math.cos(2.0 * math.pi * s / self.duration))
        return self.base_speed


@dataclass(frozen=True)
class ScenarioConfig:
    topology: Ring | OpenChain
    vehicles: tuple
    dt: float = 0.1
    steps: int = 3600
    target_speed: float = 20.0
    target_headway: float = 1.26
    perturbation: PerturbationProfile | None = None
    seed: int = 0
    position_jitter: float = 0.0
    controllers: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps}")
        if not self.vehicles:
            raise ConfigError("scenario has no vehicles")
        for i, v in enumerate(self.vehicles):
            if v.controller not in TAGS:
                raise ConfigError(f"vehicle {i}: unknown controller {v.controller!r}")
            if not v.length > 0:
                raise ConfigError(f"vehicle {i}: length must be positive")
            if not v.speed >= 0:
                raise ConfigError(f"vehicle {i}: speed must be >= 0")
        if isinstance(self.topology, Ring):
            if not self.topology.track_length > 0:
                raise ConfigError("ring track_length must be positive")
        elif isinstance(self.topology, OpenChain):
            if not self.topology.road_length > 0:
                raise ConfigError("road_length must be positive")
        else:
            raise ConfigError(f"unknown topology {self.topology!r}")
        if self.position_jitter < 0:
            raise ConfigError("position_jitter must be >= 0")

    @property
    def is_ring(self):
        return isinstance(self.topology, Ring)

    @property
    def track_length(self):
        """Ring circumference, or 0 for an open road (the kernel convention)."""
        return self.topology.track_length if self.is_ring else 0.0

    @property
    def controller_tags(self):
        return tuple(v.controller for v in self.vehicles)

    def with_controller(self, slots, tag):
        """Copy with the vehicles at ``slots`` switched to ``tag``."""
        vehicles = list(self.vehicles)
        for i in slots:
            vehicles[i] = replace(vehicles[i], controller=tag)
        return replace(self, vehicles=tuple(vehicles))


@dataclass(frozen=True)
class NeighborView:
    front_gap: float | None
    front_speed: float | None
    front_length: float | None
    back_gap: float | None
    back_speed: float | None


@dataclass
class SimState:
    config: ScenarioConfig
    odo: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    length: np.ndarray
    step_index: int = 0
    collided: bool = False
    done: bool = False
    rng: np.random.Generator = None

    @property
    def t(self):
        return self.step_index * self.config.dt

    @property
    def n(self):
        return self.odo.shape[0]

    @property
    def position(self):
        if self.config.is_ring:
            return np.mod(self.odo, self.config.track_length)
        return self.odo.copy()

    @property
    def controllers(self):
        return self.config.controller_tags

    def gaps(self):
        """Front and back clearances, ``inf`` where no neighbour exists."""
        return kernels.gaps(self.odo, self.length, self.config.track_length)


def init_scenario(config: ScenarioConfig) -> SimState:
    rng = np.random.default_rng(config.seed)
    pos = np.array([v.position for v in config.vehicles], dtype=float)
    if config.position_jitter > 0:
        pos = pos + rng.uniform(-config.position_jitter, config.position_jitter, pos.shape[0])
    length = np.array([v.length for v in config.vehicles], dtype=float)
    speed = np.array([v.speed for v in config.vehicles], dtype=float)
    if config.is_ring:
        L = config.track_length
        pos = np.mod(pos, L)
        odo = np.empty_like(pos)
        odo[0] = pos[0]
        for i in range(1, pos.shape[0]):
            odo[i] = odo[i - 1] - np.mod(pos[i - 1] - pos[i], L)
    else:
        odo = pos
    front, _ = kernels.gaps(odo, length, config.track_length)
    bad = np.flatnonzero(~(front > 0))
    if bad.size:
        raise ConfigError(
            f"overlapping or misordered initial positions at vehicles {bad.tolist()} "
            "(roster must run front to back with positive clearances)"
        )
    return SimState(
        config=config, odo=odo, speed=speed, accel=np.zeros_like(speed),
        length=length, rng=rng,
    )


def neighbors(state: SimState, vehicle_id: int) -> NeighborView:
    if not isinstance(vehicle_id, (int, np.integer)) or not 0 <= vehicle_id < state.n:
        raise KeyError(f"unknown vehicle id {vehicle_id!r}")
    i = int(vehicle_id)
    front, back = state.gaps()
    n = state.n
    if math.isinf(front[i]):
        fg = fs = fl = None
    else:
        j = (i - 1) % n
        fg, fs, fl = float(front[i]), float(state.speed[j]), float(state.length[j])
    if math.isinf(back[i]):
        bg = bs = None
    else:
        bg, bs = float(back[i]), float(state.speed[(i + 1) % n])
    return NeighborView(fg, fs, fl, bg, bs)


def controller_commands(state: SimState) -> np.ndarray:
    """Commands from the configured classical controllers.

    RL-tagged vehicles get NaN.  A perturbation profile overrides vehicle 0
    with the acceleration that lands it exactly on the scheduled speed.
    """
    cfg = state.config
    front, back = state.gaps()
    cmd = fleet_commands(cfg.controller_tags, front, back, state.speed, cfg.controllers, cfg.dt)
    if cfg.perturbation is not None:
        target = cfg.perturbation.speed_at(state.t + cfg.dt)
        cmd[0] = (target - state.speed[0]) / cfg.dt
    return cmd


def _as_array(commands, n):
    if isinstance(commands, Mapping):
        if set(commands) != set(range(n)):
            raise SimulationError(f"need exactly one command per vehicle 0..{n - 1}")
        arr = np.array([commands[i] for i in range(n)], dtype=float)
    else:
        arr = np.asarray(commands, dtype=float)
        if arr.shape != (n,):
            raise SimulationError(f"expected {n} commands, got shape {arr.shape}")
    return arr


def step(state: SimState, accel_commands) -> tuple[SimState, StepRecord]:
    """Advance one ``dt``; returns the successor state and its record."""
    if state.done:
        raise SimulationError("episode already terminated")
    cfg = state.config
    cmd = _as_array(accel_commands, state.n)
    if not np.all(np.isfinite(cmd)):
        raise SimulationError(f"non-finite acceleration command for vehicles {np.flatnonzero(~np.isfinite(cmd)).tolist()}")
    odo, speed, realised = kernels.integrate(state.odo, state.speed, cmd, cfg.dt)
    front, back = kernels.gaps(odo, state.length, cfg.track_length)
    collision = front <= 0.0
    jerk = (realised - state.accel) / cfg.dt

    v_lead = np.roll(speed, 1)
    lead_len = np.roll(state.length, 1)
    ttc = ttc_array(front, speed - v_lead)
    headway = headway_array(front, lead_len, speed)

    new = SimState(
        config=cfg, odo=odo, speed=speed, accel=realised, length=state.length,
        step_index=state.step_index + 1, rng=state.rng,
    )
    new.collided = bool(collision.any())
    new.done = new.collided or new.step_index >= cfg.steps
    if not cfg.is_ring and odo[0] >= cfg.topology.road_length and not new.done:
        log.warning("head vehicle reached the end of the %.0f m road at t=%.1f s; freezing episode",
                    cfg.topology.road_length, new.t)
        new.done = True

    record = StepRecord(
        t=new.t,
        position=new.position,
        speed=speed,
        accel=realised,
        front_gap=np.where(np.isinf(front), np.nan, front),
        back_gap=np.where(np.isinf(back), np.nan, back),
        ttc=ttc,
        time_headway=headway,
        jerk=jerk,
        collision=collision,
    )
    return new, record


def rollout(config: ScenarioConfig, max_steps=None) -> Trajectory:
    """Run a scenario whose vehicles are all classically controlled."""
    if "rl" in config.controller_tags:
        raise ConfigError("scenario contains rl vehicles; use the environment with a policy")
    state = init_scenario(config)
    initial = state.position
    records = []
    limit = config.steps if max_steps is None else min(max_steps, config.steps)
    while not state.done and len(records) < limit:
        state, rec = step(state, controller_commands(state))
        records.append(rec)
    return Trajectory.from_records(
        records, config.controller_tags, initial_position=initial,
        track_length=config.track_length or None,
    )
