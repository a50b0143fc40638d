"""Multi-agent car-following environment with a shared policy.

Every ``rl``-tagged vehicle is an agent.  Each agent sees only its leader
and follower (``bilateral``) or only its leader (``cfm``); one policy is
queried for all of them and their transitions go into a single stream.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .controllers import clip_accel
from .metrics import EpisodeMetrics, episode_metrics
from .reward import RewardConfig, f_comfort_array, f_eff_array, f_safety_array
from .sim import (
    ConfigError, ScenarioConfig, SimState, controller_commands, init_scenario,
    neighbors, step,
)
from .trajectory import StepRecord, Trajectory

ACCEL_BOUNDS = (-3.0, 3.0)
SENSING_RANGE = 100.0
SPEED_SCALE = 30.0
ACCEL_SCALE = 3.0
OBS_DIMS = {"bilateral": 7, "cfm": 5}


class Transition(NamedTuple):
    obs: np.ndarray
    action: float
    reward: float
    next_obs: np.ndarray
    done: bool
    agent_id: int


def observe(state: SimState, agent_id: int, variant="bilateral", normalize=True):
    """State vector for one agent.

    Bilateral order: own speed, front clearance, leader-minus-own speed,
    back clearance, own-minus-follower speed, target speed, previous
    acceleration.  The ``cfm`` variant drops the two follower entries.  A
    missing neighbour reads as a clearance at the sensing range with zero
    relative speed.  Normalized entries are clipped to [-1, 1]: speeds over
    30 m/s, clearances over 100 m, accelerations over 3 m/s^2.
    """
    if variant not in OBS_DIMS:
        raise ConfigError(f"unknown observation variant {variant!r}")
    nb = neighbors(state, agent_id)
    v = float(state.speed[agent_id])
    if nb.front_gap is None:
        s_front, dv_front = SENSING_RANGE, 0.0
    else:
        s_front, dv_front = nb.front_gap, nb.front_speed - v
    if nb.back_gap is None:
        s_back, dv_back = SENSING_RANGE, 0.0
    else:
        s_back, dv_back = nb.back_gap, v - nb.back_speed
    v_l = state.config.target_speed
    a_prev = float(state.accel[agent_id])
    if variant == "bilateral":
        raw = [v, s_front, dv_front, s_back, dv_back, v_l, a_prev]
        scale = [SPEED_SCALE, SENSING_RANGE, SPEED_SCALE, SENSING_RANGE, SPEED_SCALE, SPEED_SCALE, ACCEL_SCALE]
    else:
        raw = [v, s_front, dv_front, v_l, a_prev]
        scale = [SPEED_SCALE, SENSING_RANGE, SPEED_SCALE, SPEED_SCALE, ACCEL_SCALE]
    raw = np.array(raw, dtype=float)
    if not normalize:
        return raw
    return np.clip(raw / np.array(scale), -1.0, 1.0)


class CarFollowingEnv:
    def __init__(self, scenario: ScenarioConfig, variant="bilateral", reward=None):
        if variant not in OBS_DIMS:
            raise ConfigError(f"unknown observation variant {variant!r}")
        self.scenario = scenario
        self.variant = variant
        self.reward_cfg = reward or RewardConfig()
        self.agents = [i for i, tag in enumerate(scenario.controller_tags) if tag == "rl"]
        self.state = None

    @property
    def obs_dim(self):
        return OBS_DIMS[self.variant]

    def reset(self, seed=None):
        sc = self.scenario if seed is None else replace(self.scenario, seed=int(seed))
        self.state = init_scenario(sc)
        return self.observations()

    def observations(self):
        return {i: observe(self.state, i, self.variant) for i in self.agents}

    def step(self, actions):
        """Apply one action per agent; everything else follows its controller.

        Returns ``(obs, rewards, done, record)``, keyed by agent id.
        """
        if set(actions) != set(self.agents):
            raise ConfigError(f"expected actions for agents {self.agents}, got {sorted(actions)}")
        cmd = controller_commands(self.state)
        for i in self.agents:
            cmd[i] = clip_accel(float(actions[i]), ACCEL_BOUNDS)
        self.state, record = step(self.state, cmd)
        rewards = self._rewards(record)
        return self.observations(), rewards, self.state.done, record

    def _rewards(self, rec: StepRecord):
        if not self.agents:
            return {}
        idx = np.asarray(self.agents)
        n = rec.speed.shape[0]
        w, p = self.reward_cfg.weights, self.reward_cfg.eff
        s = f_safety_array(rec.ttc[idx])
        e = f_eff_array(rec.time_headway[idx], p)
        c = f_comfort_array(rec.jerk[idx])
        sf = np.zeros(idx.shape[0])
        ef = np.zeros(idx.shape[0])
        if self.variant == "bilateral":
            has_follower = ~np.isnan(rec.back_gap[idx])
            fol = (idx + 1) % n
            sf = np.where(has_follower, f_safety_array(rec.ttc[fol]), 0.0)
            ef = np.where(has_follower, f_eff_array(rec.time_headway[fol], p), 0.0)
        total = w.safety * (s + sf) + w.efficiency * (e + ef) + w.comfort * c
        total = total + np.where(rec.collision[idx], self.reward_cfg.collision_penalty, 0.0)
        rec.r_safety[idx] = s
        rec.r_eff[idx] = e
        rec.r_comfort[idx] = c
        if self.variant == "bilateral":
            rec.r_safety_f[idx] = sf
            rec.r_eff_f[idx] = ef
        rec.reward[idx] = total
        return {int(i): float(r) for i, r in zip(idx, total)}


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    transitions: list
    metrics: EpisodeMetrics
    mean_reward: float
    collided: bool


Policy = Callable[[np.ndarray], np.ndarray]


def run_episode(policy: Policy, env: CarFollowingEnv, explore=False, noise_std=0.0,
                rng=None, seed=None, on_step=None, max_steps=None):
    """Roll one episode with a shared policy.

    ``policy`` maps a ``[n_agents, obs_dim]`` batch to accelerations; every
    agent is queried independently through that one function.  With
    ``explore`` set, Gaussian noise of ``noise_std`` m/s^2 is added before
    clipping.  ``on_step(transitions)`` is called after every step, which is
    how the trainer interleaves updates.
    """
    if explore and rng is None:
        raise ValueError("exploration needs an rng")
    want = getattr(policy, "obs_dim", None)
    if want is not None and want != env.obs_dim:
        raise ConfigError(f"policy takes {want}-dim observations, env produces {env.obs_dim}")
    obs = env.reset(seed)
    agents = env.agents
    initial = env.state.position
    records, transitions = [], []
    done = False
    limit = env.scenario.steps if max_steps is None else max_steps
    while not done and len(records) < limit:
        if agents:
            batch = np.stack([obs[i] for i in agents])
            acts = np.asarray(policy(batch), dtype=float).reshape(-1)
            if acts.shape[0] != len(agents):
                raise ConfigError(f"policy returned {acts.shape[0]} actions for {len(agents)} agents")
            if explore and noise_std > 0:
                acts = acts + rng.normal(0.0, noise_std, acts.shape[0])
            acts = np.clip(acts, *ACCEL_BOUNDS)
            actions = {i: float(a) for i, a in zip(agents, acts)}
        else:
            actions = {}
        next_obs, rewards, done, rec = env.step(actions)
        records.append(rec)
        step_tr = [
            Transition(obs[i], actions[i], rewards[i], next_obs[i], bool(done), i)
            for i in agents
        ]
        transitions.extend(step_tr)
        if on_step is not None:
            on_step(step_tr)
        obs = next_obs
    traj = Trajectory.from_records(
        records, env.scenario.controller_tags, initial_position=initial,
        track_length=env.scenario.track_length or None,
    )
    vehicles = agents or None
    metrics = episode_metrics(traj, vehicles)
    rewards = [tr.reward for tr in transitions]
    mean_reward = float(np.mean(rewards)) if rewards else 0.0
    return EpisodeResult(traj, transitions, metrics, mean_reward, env.state.collided)
