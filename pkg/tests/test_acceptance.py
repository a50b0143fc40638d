"""Acceptance criteria, one check per criterion.

Under pytest each check is a test and its PASS/FAIL line is repeated in the
terminal summary.  ``python tests/test_acceptance.py`` runs them all and
prints the same lines.
"""
from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from bilateral_cf import kernels, presets
from bilateral_cf.controllers import bcm_accel, idm_equilibrium_gap, unilateral_accel
from bilateral_cf.env import CarFollowingEnv, run_episode
from bilateral_cf.learner import Ddpg, TrainConfig, train
from bilateral_cf.metrics import oscillation_amplitudes
from bilateral_cf.reward import (
    EffParams, f_comfort_array, f_eff, f_eff_array, f_safety, retarget_u,
    reward_bilateral, reward_cfm,
)
from bilateral_cf.sim import (
    OpenChain, PerturbationProfile, Ring, ScenarioConfig, VehicleSpec,
    controller_commands, init_scenario, rollout, step,
)
from gradcheck import max_relative_error

H_GRID = np.arange(0.01, 10.0, 0.001)


def c1_efficiency_shape():
    vals = f_eff_array(H_GRID, EffParams(0.4226, 0.4365))
    h, peak = H_GRID[np.argmax(vals)], vals.max()
    ok = abs(h - 1.26) <= 0.01 and abs(peak - 0.659) <= 0.005
    return ok, f"argmax h={h:.3f} (want 1.26±0.01), max={peak:.4f} (want 0.659±0.005)"


def c2_retargeting():
    u = retarget_u(0.8, 0.4365)
    vals = f_eff_array(H_GRID, EffParams(u, 0.4365))
    h = H_GRID[np.argmax(vals)]
    ok = abs(u - (-0.0326)) < 1e-4 and abs(h - 0.80) <= 0.01
    return ok, f"u={u:.5f} (want -0.0326), argmax h={h:.3f} (want 0.80±0.01)"


def c3_comfort_bounds():
    a = np.arange(-300, 301) / 100.0
    jerk = (a[:, None] - a[None, :]) / 0.1
    fc = f_comfort_array(jerk)
    edge = f_comfort_array(np.array([60.0, -60.0]))
    ok = (jerk.min() >= -60 and jerk.max() <= 60 and fc.min() >= -1 and fc.max() <= 0
          and np.all(edge == -1.0))
    return ok, (f"jerk in [{jerk.min():g}, {jerk.max():g}], f_comfort in [{fc.min():g}, {fc.max():g}], "
                f"f_comfort(±60)={edge.tolist()}")


def c4_safety_branch():
    grid = np.concatenate([np.logspace(-20, 1, 20001), [0.0]])
    vals = np.array([f_safety(t) for t in grid])
    floor_from = 4.0 * math.exp(-10.0)
    below = vals[grid < floor_from * 0.999]
    ok = (f_safety(4.0) == 0.0 and f_safety(4.0001) == 0.0 and f_safety(100.0) == 0.0
          and abs(f_safety(2.0) - math.log(0.5)) <= 1e-12
          and vals.min() >= -10.0 and np.all(below == -10.0))
    return ok, (f"f(4)={f_safety(4.0)}, f(2)-ln0.5={f_safety(2.0) - math.log(0.5):.1e}, "
                f"min={vals.min()}, floor below 4e^-10: {bool(np.all(below == -10.0))}")


def c5_equilibria():
    ctrl = presets.default_controllers(1.26)
    v = 20.0
    gap = idm_equilibrium_gap(v, ctrl.idm)
    n = 6
    xs = [1000.0 - i * (gap + 5.0) for i in range(n)]
    sc = ScenarioConfig(
        topology=OpenChain(1e6), vehicles=tuple(VehicleSpec("idm", x, v) for x in xs),
        steps=3600, perturbation=PerturbationProfile(base_speed=v, amplitude=0.0),
        controllers=ctrl,
    )
    traj = rollout(sc)
    idm_dev = float(np.nanmax(np.abs(traj["front_gap"][:, 1:] - gap)))

    L, nb = 360.0, 10
    ring = ScenarioConfig(
        topology=Ring(L), steps=3600, controllers=ctrl,
        vehicles=tuple(VehicleSpec("bcm", (L - i * L / nb) % L, v) for i in range(nb)),
    )
    state = init_scenario(ring)
    worst = 0.0
    while not state.done:
        cmd = controller_commands(state)
        worst = max(worst, float(np.abs(cmd).max()))
        state, _ = step(state, cmd)
    ok = idm_dev < 1e-3 and worst < 1e-9
    return ok, f"IDM max |gap - s_eq| = {idm_dev:.2e} m (< 1e-3); BCM max |cmd| = {worst:.1e}"


def _perturb(controller):
    sc, measured = presets.build("perturbation", controller)
    traj = rollout(sc)
    return traj, measured


def c6_string_stability():
    traj, measured = _perturb("bcm")
    amps = oscillation_amplitudes(traj["speed"], 0.1, 60.0)[measured]
    non_inc = bool(np.all(np.diff(amps) <= 0))
    ratio = amps[-1] / amps[0]
    ok = non_inc and ratio < 0.5
    return ok, (f"non-increasing={non_inc}, amp10/amp1={ratio:.3f} (want < 0.5); "
                f"amps={np.round(amps, 3).tolist()}")


def c7_jerk_ordering():
    jerk = {}
    for c in ("gipps", "bcm", "idm"):
        traj, measured = _perturb(c)
        jerk[c] = float(np.nanmean(np.abs(traj["jerk"][:, measured])))
    ok = jerk["gipps"] > jerk["bcm"] and jerk["gipps"] > jerk["idm"]
    return ok, "mean|jerk| " + ", ".join(f"{k}={v:.4f}" for k, v in jerk.items())


def c8_determinism():
    runs = {}
    for name, ctl in (("closed-loop", "idm"), ("perturbation", "bcm")):
        a = rollout(presets.build(name, ctl, seed=7)[0]).to_csv_string()
        b = rollout(presets.build(name, ctl, seed=7)[0]).to_csv_string()
        runs[name] = a == b
    sc, _ = presets.build("smoke", seed=7)
    env = CarFollowingEnv(sc)
    pol = Ddpg(env.obs_dim, TrainConfig(seed=3)).policy()
    a = run_episode(pol, env, seed=7).trajectory.to_csv_string()
    b = run_episode(pol, env, seed=7).trajectory.to_csv_string()
    runs["smoke"] = a == b
    return all(runs.values()), f"byte-identical: {runs}"


def c9_gradients():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        worst = max(worst, max_relative_error([7, 64, 64, 1], rng, output="tanh", output_scale=3.0))
        worst = max(worst, max_relative_error([8, 64, 64, 1], rng))
    return worst < 1e-4, f"max relative error {worst:.2e} over 100 actor + 100 critic draws"


def c10_learning_smoke():
    sc, _ = presets.build("smoke")
    env = CarFollowingEnv(sc)
    cfg = TrainConfig(seed=0, **presets.SMOKE_TRAIN)
    res = train(env, cfg)
    r = [row.mean_reward for row in res.curve]
    first5, last5 = float(np.mean(r[:5])), float(np.mean(r[-5:]))
    rng = np.random.default_rng(123)
    rand = float(np.mean([
        run_episode(lambda o: rng.uniform(-3, 3, o.shape[0]), env, seed=1000 + k).mean_reward
        for k in range(5)
    ]))
    final = run_episode(res.policy, env, seed=9999)
    ok = last5 > first5 and last5 > rand and not final.collided
    return ok, (f"{cfg.episodes}x{cfg.steps}: first5={first5:.3f}, last5={last5:.3f}, "
                f"random={rand:.3f}, final eval collided={final.collided}")


def c11_consistency():
    rng = np.random.default_rng(1)
    mismatch = 0
    for _ in range(10_000):
        ttc = float(rng.uniform(-1, 10)) if rng.random() < 0.8 else None
        h = float(rng.uniform(0.05, 5)) if rng.random() < 0.9 else None
        j = float(rng.uniform(-60, 60))
        if reward_bilateral(ttc, h, None, None, j) != reward_cfm(ttc, h, j):
            mismatch += 1
    g = presets.default_controllers(1.26).bcm
    front = rng.uniform(0.5, 80, 10_000)
    v = rng.uniform(0, 30, 10_000)
    vl = rng.uniform(0, 30, 10_000)
    eq10 = np.array([bcm_accel(f, s * g.reaction_time, a - s, 0.0, g) for f, s, a in zip(front, v, vl)])
    eq11 = np.array([unilateral_accel(f, s, a, g) for f, s, a in zip(front, v, vl)])
    kern = kernels.bcm_accel(front, np.full_like(front, np.inf), vl, v, np.zeros_like(v),
                             g.kd, g.kv, g.reaction_time)
    err = max(float(np.max(np.abs(eq10 - eq11))), float(np.max(np.abs(kern - eq11))))
    ok = mismatch == 0 and err < 1e-9
    return ok, f"reward mismatches={mismatch}/10000; fallback max |diff|={err:.1e}"


CRITERIA = [
    (1, "efficiency-reward shape", c1_efficiency_shape),
    (2, "retargeting", c2_retargeting),
    (3, "comfort bounds", c3_comfort_bounds),
    (4, "safety branch", c4_safety_branch),
    (5, "controller equilibria", c5_equilibria),
    (6, "string stability", c6_string_stability),
    (7, "jerk ordering", c7_jerk_ordering),
    (8, "determinism", c8_determinism),
    (9, "gradient correctness", c9_gradients),
    (10, "learning smoke", c10_learning_smoke),
    (11, "bilateral/unilateral consistency", c11_consistency),
]


def _line(num, name, ok, detail, secs):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {name}: {detail} ({secs:.1f} s)"


@pytest.mark.parametrize("num,name,check", CRITERIA, ids=[f"c{n}" for n, _, _ in CRITERIA])
def test_criterion(num, name, check, record_criterion):
    t0 = time.perf_counter()
    ok, detail = check()
    record_criterion(_line(num, name, ok, detail, time.perf_counter() - t0))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, name, check in CRITERIA:
        t0 = time.perf_counter()
        ok, detail = check()
        failed += not ok
        print(_line(num, name, ok, detail, time.perf_counter() - t0), flush=True)
    sys.exit(1 if failed else 0)
