"""Pure-numpy kernels.  Reference path and fallback when numba is off."""
import numpy as np


def gaps(odo, length, track_length):
    """Bumper-to-bumper clearances ahead of and behind every vehicle.

    ``odo`` holds unwrapped positions ordered front to back.  A positive
    ``track_length`` closes the road into a ring; otherwise the head has no
    leader and the tail no follower (reported as ``inf``).
    """
    n = odo.shape[0]
    front = np.empty(n)
    back = np.empty(n)
    if n == 0:
        return front, back
    front[1:] = odo[:-1] - odo[1:] - length[:-1]
    if track_length > 0.0:
        front[0] = odo[n - 1] + track_length - odo[0] - length[n - 1]
        back[:-1] = front[1:]
        back[n - 1] = front[0]
    else:
        front[0] = np.inf
        back[:-1] = front[1:]
        back[n - 1] = np.inf
    return front, back


def integrate(odo, speed, accel, dt):
    """Semi-implicit Euler with a zero-speed floor.

    Returns new positions, new speeds and the acceleration actually realised
    after the floor was applied.
    """
    new_speed = np.maximum(speed + accel * dt, 0.0)
    realised = (new_speed - speed) / dt
    return odo + new_speed * dt, new_speed, realised


def idm_accel(v, gap, v_lead, v0, a, b, T, s0, delta):
    dv = v - v_lead
    dyn = v * T + v * dv / (2.0 * np.sqrt(a * b))
    s_star = s0 + np.maximum(dyn, 0.0)
    # inf gap (no leader) makes the interaction term vanish
    return a * (1.0 - (v / v0) ** delta - (s_star / gap) ** 2)


def gipps_accel(v, gap, v_lead, v0, a, b, tau, dt):
    with np.errstate(invalid="ignore"):
        v_safe = -b * tau + np.sqrt(b * b * tau * tau + v_lead * v_lead + 2.0 * b * gap)
    v_safe = np.where(np.isinf(gap), np.inf, v_safe)
    target = np.minimum(np.minimum(v + a * dt, v0), v_safe)
    return (target - v) / dt


def unilateral_accel(front_gap, v, v_lead, kd, kv, T):
    out = kd * (front_gap - v * T) + kv * (v_lead - v)
    return np.where(np.isinf(front_gap), 0.0, out)


def bcm_accel(front_gap, back_gap, v_lead, v, v_follow, kd, kv, T):
    r_front = v_lead - v
    r_back = v - v_follow
    with np.errstate(invalid="ignore"):
        both = kd * (front_gap - back_gap) + kv * (r_front - r_back)
    fallback = kd * (front_gap - v * T) + kv * (v_lead - v)
    out = np.where(np.isinf(back_gap), fallback, both)
    return np.where(np.isinf(front_gap), 0.0, out)
