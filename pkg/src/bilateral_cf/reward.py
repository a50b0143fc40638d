"""Reward terms for the learning agents.

Every per-term function accepts ``None`` or NaN for an undefined input and
scores it as the neutral value 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TTC_THRESHOLD = 4.0
SAFETY_FLOOR = -10.0
JERK_SCALE = 3600.0
_LOG_THRESHOLD = math.log(TTC_THRESHOLD)


@dataclass(frozen=True)
class RewardWeights:
    safety: float = 1.0
    efficiency: float = 1.0
    comfort: float = 1.0


@dataclass(frozen=True)
class EffParams:
    """Log-space mean ``u`` and deviation ``sigma`` of the headway density."""

    u: float = 0.4226
    sigma: float = 0.4365

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def mode(self):
        return math.exp(self.u - self.sigma ** 2)


@dataclass(frozen=True)
class RewardConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    eff: EffParams = field(default_factory=EffParams)
    collision_penalty: float = -50.0

    @classmethod
    def for_target_headway(cls, target_headway, sigma=0.4365, **kw):
        return cls(eff=EffParams(u=retarget_u(target_headway, sigma), sigma=sigma), **kw)


class RewardTerms(NamedTuple):
    safety: float
    eff: float
    comfort: float
    safety_f: float
    eff_f: float
    total: float


def _undefined(x):
    return x is None or x != x


def f_safety(ttc):
    if _undefined(ttc) or ttc < 0 or ttc > TTC_THRESHOLD:
        return 0.0
    if ttc == 0:
        return SAFETY_FLOOR
    # log difference: ttc / 4 underflows to 0 for subnormal ttc
    return max(math.log(ttc) - _LOG_THRESHOLD, SAFETY_FLOOR)


def f_eff(h, p: EffParams = EffParams()):
    if _undefined(h) or h <= 0:
        return 0.0
    z = math.log(h) - p.u
    return math.exp(-z * z / (2.0 * p.sigma ** 2)) / (math.sqrt(2.0 * math.pi) * h * p.sigma)


def f_comfort(jerk):
    return -(jerk * jerk) / JERK_SCALE


def retarget_u(h_target, sigma=0.4365):
    """Log-space mean that puts the headway density's mode at ``h_target``."""
    if not h_target > 0:
        raise ValueError(f"target headway must be positive, got {h_target}")
    return math.log(h_target) + sigma * sigma


def reward_cfm(ttc, h, jerk, w: RewardWeights = RewardWeights(), p: EffParams = EffParams()):
    return w.safety * f_safety(ttc) + w.efficiency * f_eff(h, p) + w.comfort * f_comfort(jerk)


def reward_terms(ttc_front, h_front, ttc_back, h_back, jerk,
                 w: RewardWeights = RewardWeights(), p: EffParams = EffParams()):
    s, e, c = f_safety(ttc_front), f_eff(h_front, p), f_comfort(jerk)
    sf, ef = f_safety(ttc_back), f_eff(h_back, p)
    total = w.safety * (s + sf) + w.efficiency * (e + ef) + w.comfort * c
    return RewardTerms(s, e, c, sf, ef, total)


def reward_bilateral(ttc_front, h_front, ttc_back, h_back, jerk,
                     w: RewardWeights = RewardWeights(), p: EffParams = EffParams()):
    """Front-view terms plus the follower's safety and efficiency.

    With no follower (``ttc_back`` and ``h_back`` undefined) this is exactly
    :func:`reward_cfm`.
    """
    return reward_terms(ttc_front, h_front, ttc_back, h_back, jerk, w, p).total


# -- array forms used inside the environment --------------------------------

def f_safety_array(ttc):
    ttc = np.asarray(ttc, dtype=float)
    out = np.zeros_like(ttc)
    m = (ttc >= 0) & (ttc <= TTC_THRESHOLD)  # NaN compares False
    with np.errstate(divide="ignore"):
        out[m] = np.maximum(np.log(ttc[m]) - _LOG_THRESHOLD, SAFETY_FLOOR)
    return out


def f_eff_array(h, p: EffParams = EffParams()):
    h = np.asarray(h, dtype=float)
    out = np.zeros_like(h)
    m = h > 0
    z = np.log(h[m]) - p.u
    out[m] = np.exp(-z * z / (2.0 * p.sigma ** 2)) / (math.sqrt(2.0 * math.pi) * h[m] * p.sigma)
    return out


def f_comfort_array(jerk):
    jerk = np.asarray(jerk, dtype=float)
    return -(jerk * jerk) / JERK_SCALE
