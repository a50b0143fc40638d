import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from bilateral_cf import presets
from bilateral_cf.env import CarFollowingEnv, observe, run_episode
from bilateral_cf.learner import Ddpg, TrainConfig
from bilateral_cf.reward import RewardConfig
from bilateral_cf.sim import ConfigError, OpenChain, Ring, ScenarioConfig, VehicleSpec, init_scenario

ZERO = lambda obs: np.zeros(obs.shape[0])  # noqa: E731


def cruise_ring(tags, L=360.0, v=20.0, steps=3600):
    n = len(tags)
    return ScenarioConfig(
        topology=Ring(L), steps=steps, controllers=presets.default_controllers(),
        vehicles=tuple(VehicleSpec(t, (L - i * L / n) % L, v) for i, t in enumerate(tags)),
    )


def test_symmetric_ring_observation():
    s = init_scenario(cruise_ring(["rl"] * 6))
    raw = observe(s, 2, normalize=False)
    assert raw[2] == 0.0 and raw[4] == 0.0
    assert raw[1] == pytest.approx(raw[3])


def test_relative_speed_convention():
    sc = ScenarioConfig(topology=OpenChain(1e4), vehicles=(
        VehicleSpec("idm", 135.0, 25.0), VehicleSpec("rl", 100.0, 20.0)))
    raw = observe(init_scenario(sc), 1, normalize=False)
    np.testing.assert_allclose(raw[:5], [20.0, 30.0, 5.0, 100.0, 0.0])  # no follower -> sentinel
    norm = observe(init_scenario(sc), 1)
    np.testing.assert_allclose(norm[:3], [20 / 30, 0.3, 5 / 30])
    assert np.all(np.abs(norm) <= 1.0)


def test_cfm_is_a_projection():
    s = init_scenario(cruise_ring(["rl", "idm", "rl", "idm"], v=13.0))
    b = observe(s, 2, "bilateral")
    c = observe(s, 2, "cfm")
    assert b.shape == (7,) and c.shape == (5,)
    np.testing.assert_array_equal(c[:3], b[:3])
    np.testing.assert_array_equal(c[3:], b[5:])


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 9), st.integers(0, 100))
def test_observation_permutation_equivariance(k, seed):
    """Rotating the roster relabels ids but each car sees the same thing."""
    rng = np.random.default_rng(seed)
    L, n = 400.0, 10
    pos = np.sort(rng.uniform(0, L, n))[::-1]
    pos = pos[np.concatenate([[True], np.abs(np.diff(pos)) > 6.0])]
    assume(pos[-1] + L - pos[0] > 6.0)  # wrap-around clearance
    n = pos.shape[0]
    k = k % n
    speeds = rng.uniform(0, 30, n)
    specs = [VehicleSpec("rl", float(x), float(v)) for x, v in zip(pos, speeds)]
    rotated = specs[k:] + specs[:k]
    a = init_scenario(ScenarioConfig(topology=Ring(L), vehicles=tuple(specs)))
    b = init_scenario(ScenarioConfig(topology=Ring(L), vehicles=tuple(rotated)))
    for i in range(n):
        np.testing.assert_allclose(observe(a, i), observe(b, (i - k) % n), atol=1e-12)


def test_shared_policy_same_obs_same_action():
    sc, _ = presets.build("closed-loop", "rl")
    env = CarFollowingEnv(sc)
    pol = Ddpg(7, TrainConfig()).policy()
    obs = np.tile(env.reset()[0], (5, 1))
    acts = pol(obs)
    # BLAS may round batch rows differently in the last ulp
    np.testing.assert_allclose(acts, acts[0], rtol=1e-12, atol=0)


def test_episode_runs_exactly_to_step_limit_and_jerk_free():
    env = CarFollowingEnv(cruise_ring(["rl", "idm"] * 5, steps=3600))
    res = run_episode(ZERO, env)
    assert res.trajectory.n_steps == 3600 and not res.collided
    assert env.state.done
    assert res.metrics.mean_abs_jerk < 1e-9
    rewards = [tr.reward for tr in res.transitions if tr.agent_id == 0]
    assert len(rewards) == 3600


def test_equilibrium_rewards_equal_across_agents():
    env = CarFollowingEnv(cruise_ring(["rl"] * 10, steps=5))
    env.reset()
    _, rewards, done, _ = env.step({i: 0.0 for i in env.agents})
    vals = np.array(list(rewards.values()))
    assert not done and np.allclose(vals, vals[0], atol=1e-12)


def test_reward_decomposition_logged():
    sc, _ = presets.build("smoke", steps=200)
    env = CarFollowingEnv(sc)
    rng = np.random.default_rng(0)
    res = run_episode(lambda o: rng.uniform(-3, 3, o.shape[0]), env, seed=1)
    tr = res.trajectory
    i = env.agents[0]
    live = ~tr["collision"][:, i]
    total = (tr["r_safety"] + tr["r_safety_f"] + tr["r_eff"] + tr["r_eff_f"] + tr["r_comfort"])[live, i]
    np.testing.assert_allclose(tr["reward"][live, i], total, atol=1e-12)
    assert np.all(np.isnan(tr["reward"][:, 1]))  # IDM rows carry no reward


def test_collision_penalty_hits_offender():
    sc = ScenarioConfig(topology=OpenChain(1e4), steps=100, vehicles=(
        VehicleSpec("idm", 120.0, 0.0), VehicleSpec("rl", 100.0, 20.0), VehicleSpec("rl", 50.0, 20.0)))
    env = CarFollowingEnv(sc, reward=RewardConfig(collision_penalty=-50.0))
    env.reset()
    done = False
    while not done:
        _, rewards, done, rec = env.step({1: 3.0, 2: 0.0})
    assert rec.collision[1] and not rec.collision[2]
    assert rewards[1] < -40.0 and rewards[2] > -40.0


def test_actions_are_clipped():
    env = CarFollowingEnv(cruise_ring(["rl", "idm"], steps=5))
    env.reset()
    _, _, _, rec = env.step({0: 99.0})
    assert rec.accel[0] == pytest.approx(3.0)


def test_dimension_and_action_key_errors():
    env = CarFollowingEnv(cruise_ring(["rl", "idm"], steps=5), variant="cfm")
    with pytest.raises(ConfigError):
        run_episode(Ddpg(7, TrainConfig()).policy(), env)
    env.reset()
    with pytest.raises(ConfigError):
        env.step({1: 0.0})
    with pytest.raises(ConfigError):
        CarFollowingEnv(cruise_ring(["rl"]), variant="stereo")


def test_run_episode_is_deterministic():
    sc, _ = presets.build("smoke", steps=300)
    env = CarFollowingEnv(sc)
    rng1, rng2 = np.random.default_rng(4), np.random.default_rng(4)
    a = run_episode(ZERO, env, explore=True, noise_std=0.5, rng=rng1, seed=3)
    b = run_episode(ZERO, env, explore=True, noise_std=0.5, rng=rng2, seed=3)
    assert a.trajectory.to_csv_string() == b.trajectory.to_csv_string()
