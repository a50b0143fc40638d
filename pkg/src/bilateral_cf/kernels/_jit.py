"""Loop kernels compiled with numba.  Same contracts as ``_vec``."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def gaps(odo, length, track_length):
    n = odo.shape[0]
    front = np.empty(n)
    back = np.empty(n)
    if n == 0:
        return front, back
    for i in range(1, n):
        front[i] = odo[i - 1] - odo[i] - length[i - 1]
    if track_length > 0.0:
        front[0] = odo[n - 1] + track_length - odo[0] - length[n - 1]
    else:
        front[0] = np.inf
    for i in range(n - 1):
        back[i] = front[i + 1]
    back[n - 1] = front[0] if track_length > 0.0 else np.inf
    return front, back


@njit(cache=True)
def integrate(odo, speed, accel, dt):
    n = odo.shape[0]
    new_odo = np.empty(n)
    new_speed = np.empty(n)
    realised = np.empty(n)
    for i in range(n):
        v = speed[i] + accel[i] * dt
        if v < 0.0:
            v = 0.0
        new_speed[i] = v
        realised[i] = (v - speed[i]) / dt
        new_odo[i] = odo[i] + v * dt
    return new_odo, new_speed, realised


@njit(cache=True)
def idm_accel(v, gap, v_lead, v0, a, b, T, s0, delta):
    n = v.shape[0]
    out = np.empty(n)
    root = 2.0 * math.sqrt(a * b)
    for i in range(n):
        dyn = v[i] * T + v[i] * (v[i] - v_lead[i]) / root
        if dyn < 0.0:
            dyn = 0.0
        s_star = s0 + dyn
        out[i] = a * (1.0 - (v[i] / v0) ** delta - (s_star / gap[i]) ** 2)
    return out


@njit(cache=True)
def gipps_accel(v, gap, v_lead, v0, a, b, tau, dt):
    n = v.shape[0]
    out = np.empty(n)
    for i in range(n):
        target = min(v[i] + a * dt, v0)
        if not math.isinf(gap[i]):
            v_safe = -b * tau + math.sqrt(
                b * b * tau * tau + v_lead[i] * v_lead[i] + 2.0 * b * gap[i]
            )
            target = min(target, v_safe)
        out[i] = (target - v[i]) / dt
    return out


@njit(cache=True)
def unilateral_accel(front_gap, v, v_lead, kd, kv, T):
    n = v.shape[0]
    out = np.empty(n)
    for i in range(n):
        if math.isinf(front_gap[i]):
            out[i] = 0.0
        else:
            out[i] = kd * (front_gap[i] - v[i] * T) + kv * (v_lead[i] - v[i])
    return out


@njit(cache=True)
def bcm_accel(front_gap, back_gap, v_lead, v, v_follow, kd, kv, T):
    n = v.shape[0]
    out = np.empty(n)
    for i in range(n):
        if math.isinf(front_gap[i]):
            out[i] = 0.0
        elif math.isinf(back_gap[i]):
            out[i] = kd * (front_gap[i] - v[i] * T) + kv * (v_lead[i] - v[i])
        else:
            r_front = v_lead[i] - v[i]
            r_back = v[i] - v_follow[i]
            out[i] = kd * (front_gap[i] - back_gap[i]) + kv * (r_front - r_back)
    return out
