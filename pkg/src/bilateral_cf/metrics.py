"""Surrogate safety, efficiency and comfort measures.

Undefined values (TTC while not closing, headway at standstill) are NaN in
arrays and ``None`` from the scalar functions.  They are left out of means
rather than replaced by sentinels.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .reward import f_safety_array


def ttc(gap, closing_speed):
    """Time to collision; ``closing_speed = v_follower - v_leader``.

    ``None`` unless the follower is actually faster than its leader.
    """
    if closing_speed is None or not closing_speed > 0:
        return None
    return gap / closing_speed


def time_headway(gap, leader_length, v):
    if not v > 0:
        return None
    return (gap + leader_length) / v


def jerk(a_t, a_prev, dt):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return (a_t - a_prev) / dt


def ttc_array(gap, closing_speed):
    gap = np.asarray(gap, dtype=float)
    closing_speed = np.asarray(closing_speed, dtype=float)
    out = np.full(np.broadcast(gap, closing_speed).shape, np.nan)
    m = (closing_speed > 0) & np.isfinite(gap)
    np.divide(gap, closing_speed, out=out, where=m)
    return out


def headway_array(gap, leader_length, v):
    gap = np.asarray(gap, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.full(np.broadcast(gap, v).shape, np.nan)
    m = (v > 0) & np.isfinite(gap)
    np.divide(gap + leader_length, v, out=out, where=m)
    return out


def log_ttc_safety(ttc_series):
    """Mean safety score over the steps where TTC is defined (0 if none)."""
    arr = np.ravel(np.asarray(ttc_series, dtype=float))  # None -> NaN
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return 0.0
    return float(np.mean(f_safety_array(arr)))


class AnalysisError(ValueError):
    pass


def oscillation_amplitudes(speeds, dt, period, transient_cut=None):
    """Half peak-to-peak speed swing per vehicle after the transient.

    ``speeds`` is ``[steps, vehicles]``.  ``transient_cut`` (seconds)
    defaults to two forcing periods; the analysis window then spans the
    largest whole number of periods that fits.
    """
    speeds = np.asarray(speeds, dtype=float)
    if speeds.ndim == 1:
        speeds = speeds[:, None]
    if transient_cut is None:
        transient_cut = 2.0 * period
    cut = int(round(transient_cut / dt))
    per = int(round(period / dt))
    if per < 1:
        raise AnalysisError(f"period {period} s is shorter than one step")
    usable = speeds.shape[0] - cut
    if usable < per:
        raise AnalysisError(
            f"series of {speeds.shape[0]} steps is too short for a {cut}-step "
            f"transient plus one {per}-step period"
        )
    window = speeds[cut: cut + (usable // per) * per]
    return (window.max(axis=0) - window.min(axis=0)) / 2.0


def speeds_from_spacetime(t, positions, track_length=None):
    """Backward-difference speeds from a space-time table (one row per time)."""
    dx = np.diff(positions, axis=0)
    if track_length:
        dx = np.mod(dx, track_length)
    return dx / np.diff(t)[:, None]


def amplitudes_from_spacetime(t, positions, period, transient_cut=None, track_length=None):
    speeds = speeds_from_spacetime(t, positions, track_length)
    dt = float(t[1] - t[0])
    return oscillation_amplitudes(speeds, dt, period, transient_cut)


@dataclass(frozen=True)
class EpisodeMetrics:
    mean_time_headway: float
    mean_abs_jerk: float
    mean_ttc: float
    mean_log_ttc_safety: float
    collision_count: int
    mean_speed: float

    def to_dict(self):
        return asdict(self)


def _nanmean(a):
    a = np.asarray(a, dtype=float)
    a = a[~np.isnan(a)]
    return float(a.mean()) if a.size else math.nan


def episode_metrics(traj, vehicles=None):
    """Aggregate a :class:`~bilateral_cf.trajectory.Trajectory`.

    ``vehicles`` restricts the aggregation to those ids (default: all).
    """
    if vehicles is not None:
        traj = traj.select(vehicles)
    return EpisodeMetrics(
        mean_time_headway=_nanmean(traj["time_headway"]),
        mean_abs_jerk=_nanmean(np.abs(traj["jerk"])),
        mean_ttc=_nanmean(traj["ttc"]),
        mean_log_ttc_safety=log_ttc_safety(traj["ttc"]),
        collision_count=int(np.count_nonzero(traj["collision"])),
        mean_speed=_nanmean(traj["speed"]),
    )
