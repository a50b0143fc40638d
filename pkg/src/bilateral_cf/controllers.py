"""Closed-form longitudinal controllers.

The scalar functions are the readable reference forms; ``fleet_commands``
evaluates whole rosters through the batch kernels.  Sign conventions:

* IDM closing rate ``dv = v_self - v_leader`` (positive while approaching).
* BCM relative speeds ``r_front = v_leader - v_self`` and
  ``r_back = v_self - v_follower``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

TAGS = ("idm", "gipps", "bcm", "unilateral", "rl")


def _require_positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{type(obj).__name__}.{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class GippsParams:
    desired_speed: float = 30.0
    max_accel: float = 3.0
    comfortable_decel: float = 3.0
    reaction_time: float = 1.0

    def __post_init__(self):
        _require_positive(self, "desired_speed", "max_accel", "comfortable_decel", "reaction_time")


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 30.0
    max_accel: float = 1.4
    comfortable_decel: float = 2.0
    time_headway: float = 1.26
    jam_distance: float = 2.0
    delta: float = 4.0

    def __post_init__(self):
        _require_positive(
            self, "desired_speed", "max_accel", "comfortable_decel",
            "time_headway", "jam_distance", "delta",
        )


@dataclass(frozen=True)
class BcmGains:
    """Gains shared by the bilateral law and its front-only fallback.

    ``reaction_time`` sets the speed-adaptive desired clearance
    ``s0 = v * reaction_time`` used when no follower is sensed.
    """

    kd: float = 0.5
    kv: float = 1.0
    reaction_time: float = 1.26

    def __post_init__(self):
        _require_positive(self, "kd", "kv", "reaction_time")


@dataclass(frozen=True)
class ControllerConfig:
    gipps: GippsParams = field(default_factory=GippsParams)
    idm: IdmParams = field(default_factory=IdmParams)
    bcm: BcmGains = field(default_factory=BcmGains)
    unilateral: BcmGains = field(default_factory=BcmGains)
    clip_classical: bool = False
    accel_bounds: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        lo, hi = self.accel_bounds
        if not lo < hi:
            raise ValueError(f"accel_bounds must satisfy lo < hi, got {self.accel_bounds}")


def _finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite controller input {v!r}")


def gipps_safe_speed(gap, v_leader, p: GippsParams):
    """Highest speed from which the follower can still stop behind a leader
    that brakes to a standstill."""
    _finite(gap, v_leader)
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    b, tau = p.comfortable_decel, p.reaction_time
    return -b * tau + math.sqrt(b * b * tau * tau + v_leader * v_leader + 2.0 * b * gap)


def gipps_speed(v_self, gap, v_leader, p: GippsParams, dt):
    _finite(v_self, dt)
    v_free = min(v_self + p.max_accel * dt, p.desired_speed)
    if math.isinf(gap):
        return v_free
    return min(v_free, gipps_safe_speed(gap, v_leader, p))


def idm_desired_gap(v, dv, p: IdmParams):
    dyn = v * p.time_headway + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfortable_decel))
    return p.jam_distance + max(dyn, 0.0)


def idm_accel(v_self, gap, dv, p: IdmParams):
    """IDM acceleration; ``dv`` is the closing rate ``v_self - v_leader``."""
    _finite(v_self, dv)
    if not gap > 0:
        raise ValueError(f"IDM needs a positive gap, got {gap}")
    s_star = idm_desired_gap(v_self, dv, p)
    return p.max_accel * (1.0 - (v_self / p.desired_speed) ** p.delta - (s_star / gap) ** 2)


def idm_equilibrium_gap(v, p: IdmParams):
    """Clearance at which a platoon cruising at ``v`` has zero IDM acceleration."""
    ratio = 1.0 - (v / p.desired_speed) ** p.delta
    if ratio <= 0:
        raise ValueError(f"no finite equilibrium at v={v} >= desired speed {p.desired_speed}")
    return (p.jam_distance + v * p.time_headway) / math.sqrt(ratio)


def bcm_accel(front_gap, back_gap, r_front, r_back, g: BcmGains):
    return g.kd * (front_gap - back_gap) + g.kv * (r_front - r_back)


def unilateral_accel(front_gap, v_self, v_leader, g: BcmGains):
    return g.kd * (front_gap - v_self * g.reaction_time) + g.kv * (v_leader - v_self)


def clip_accel(a, bounds=(-3.0, 3.0)):
    lo, hi = bounds
    if not lo < hi:
        raise ValueError(f"bounds must satisfy lo < hi, got {bounds}")
    return min(max(a, lo), hi)


def fleet_commands(tags, front_gap, back_gap, speed, cfg: ControllerConfig, dt):
    """Commands for every classically controlled vehicle in a roster.

    Arrays are ordered front to back; absent neighbours carry ``inf`` gaps.
    Rows tagged ``rl`` (or anything unknown) come back as NaN for the caller
    to fill in.
    """
    tags = np.asarray(tags)
    n = speed.shape[0]
    out = np.full(n, np.nan)
    if n == 0:
        return out
    v_lead = np.roll(speed, 1)
    v_follow = np.roll(speed, -1)
    # open-chain ends have no partner; use own speed so relative terms vanish
    no_lead = np.isinf(front_gap)
    no_follow = np.isinf(back_gap)
    v_lead[no_lead] = speed[no_lead]
    v_follow[no_follow] = speed[no_follow]

    m = tags == "idm"
    if m.any():
        p = cfg.idm
        out[m] = kernels.idm_accel(
            speed[m], front_gap[m], v_lead[m], p.desired_speed, p.max_accel,
            p.comfortable_decel, p.time_headway, p.jam_distance, p.delta,
        )
    m = tags == "gipps"
    if m.any():
        p = cfg.gipps
        out[m] = kernels.gipps_accel(
            speed[m], front_gap[m], v_lead[m], p.desired_speed, p.max_accel,
            p.comfortable_decel, p.reaction_time, dt,
        )
    m = tags == "bcm"
    if m.any():
        g = cfg.bcm
        out[m] = kernels.bcm_accel(
            front_gap[m], back_gap[m], v_lead[m], speed[m], v_follow[m], g.kd, g.kv, g.reaction_time,
        )
    m = tags == "unilateral"
    if m.any():
        g = cfg.unilateral
        out[m] = kernels.unilateral_accel(front_gap[m], speed[m], v_lead[m], g.kd, g.kv, g.reaction_time)

    if cfg.clip_classical:
        lo, hi = cfg.accel_bounds
        out = np.where(np.isnan(out), out, np.clip(out, lo, hi))
    return out
