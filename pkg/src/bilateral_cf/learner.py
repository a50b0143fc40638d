"""Small-scale DDPG in float64 numpy.

Networks are plain MLPs with tanh hidden layers and hand-written backprop.
The actor ends in ``3 * tanh`` so its outputs are accelerations in
[-3, 3] m/s^2; the critic sees the action divided by 3.
"""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import ACCEL_BOUNDS, CarFollowingEnv, run_episode

log = logging.getLogger(__name__)

ACTION_SCALE = ACCEL_BOUNDS[1]
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


# -- networks ---------------------------------------------------------------

@dataclass
class MlpParams:
    weights: list  # (fan_in, fan_out) each
    biases: list
    hidden_activation: str = "tanh"
    output_activation: str = "identity"
    output_scale: float = 1.0

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self):
        return MlpParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases],
            self.hidden_activation, self.output_activation, self.output_scale,
        )

    def flat(self):
        """All parameters in one vector (weights then bias, layer by layer)."""
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def arrays(self):
        return [a for pair in zip(self.weights, self.biases) for a in pair]


def init_mlp(sizes, rng, hidden="tanh", output="identity", output_scale=1.0, final_range=3e-3):
    """Fan-in uniform init; the last layer is drawn from ``+-final_range``."""
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        lim = final_range if last else 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
        biases.append(rng.uniform(-lim, lim, fan_out))
    return MlpParams(weights, biases, hidden, output, float(output_scale))


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name, out):
    # derivative expressed through the activation's output
    if name == "tanh":
        return 1.0 - out * out
    return np.ones_like(out)


def _forward(params: MlpParams, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {x.shape[-1]} != network input {params.weights[0].shape[0]}")
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        name = params.output_activation if k == last else params.hidden_activation
        h = _act(name, h @ w + b)
        acts.append(h)
    return acts[-1] * params.output_scale, acts


def mlp_forward(params: MlpParams, x):
    return _forward(params, x)[0]


def mlp_backward(params: MlpParams, acts, grad_out):
    """Gradients of ``sum(grad_out * y)`` for a forward pass cached in ``acts``.

    Returns ``(grad_weights, grad_biases, grad_input)``.
    """
    g = np.asarray(grad_out, dtype=float) * params.output_scale
    last = len(params.weights) - 1
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(last, -1, -1):
        name = params.output_activation if k == last else params.hidden_activation
        g = g * _act_grad(name, acts[k + 1])
        a_in = acts[k]
        if a_in.ndim == 1:
            gw[k] = np.outer(a_in, g)
            gb[k] = g.copy()
        else:
            gw[k] = a_in.T @ g
            gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
    return gw, gb, g


class Adam:
    def __init__(self, params: MlpParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: MlpParams, gw, gb):
        """Descend along the given gradients, in place."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        grads = [g for pair in zip(gw, gb) for g in pair]
        for a, g, m, v in zip(params.arrays(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(target: MlpParams, online: MlpParams, tau):
    for t, o in zip(target.arrays(), online.arrays()):
        t *= 1.0 - tau
        t += tau * o


# -- replay -----------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity, obs_dim, rng):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = rng
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros(capacity)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.agent = np.zeros(capacity, dtype=int)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, tr):
        i = self.cursor
        self.obs[i] = tr.obs
        self.next_obs[i] = tr.next_obs
        self.action[i] = tr.action
        self.reward[i] = tr.reward
        self.done[i] = float(tr.done)
        self.agent[i] = tr.agent_id
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size):
        return self.rng.integers(0, self.size, batch_size)

    def sample(self, batch_size):
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        idx = self.sample_indices(batch_size)
        return self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx], self.done[idx]


# -- DDPG -------------------------------------------------------------------

@dataclass
class TrainConfig:
    episodes: int = 120
    steps: int = 3600
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    noise: float = 0.3  # exploration std as a fraction of the 3 m/s^2 bound
    noise_decay: float = 0.995  # per episode
    buffer_capacity: int = 100_000
    hidden: tuple = (64, 64)
    warmup: int = 0  # extra transitions collected before the first update
    updates_per_step: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.episodes < 0 or self.steps < 1 or self.batch_size < 1:
            raise ValueError("episodes >= 0, steps >= 1 and batch_size >= 1 required")
        self.hidden = tuple(int(h) for h in self.hidden)


class Ddpg:
    def __init__(self, obs_dim, cfg: TrainConfig, rng=None):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.actor = init_mlp([obs_dim, *cfg.hidden, 1], self.rng, output="tanh", output_scale=ACTION_SCALE)
        self.critic = init_mlp([obs_dim + 1, *cfg.hidden, 1], self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor, cfg.actor_lr)
        self.critic_opt = Adam(self.critic, cfg.critic_lr)

    def policy(self):
        return Policy(self.actor, self.obs_dim)


def q_value(critic, obs, action):
    x = np.concatenate([obs, (np.asarray(action) / ACTION_SCALE)[:, None]], axis=1)
    return _forward(critic, x)


def ddpg_update(agent: Ddpg, batch):
    """One critic regression step, one actor ascent step, then target tracking.

    Returns ``(critic_loss, actor_objective)`` measured before the updates.
    """
    cfg = agent.cfg
    obs, action, reward, next_obs, done = batch
    n = obs.shape[0]

    next_a = mlp_forward(agent.actor_target, next_obs)[:, 0]
    q_next = q_value(agent.critic_target, next_obs, next_a)[0][:, 0]
    y = reward + cfg.gamma * (1.0 - done) * q_next

    q, acts = q_value(agent.critic, obs, action)
    err = q[:, 0] - y
    critic_loss = 0.5 * float(np.mean(err * err))
    mu, a_acts = _forward(agent.actor, obs)
    q_pi, c_acts = q_value(agent.critic, obs, mu[:, 0])
    actor_objective = float(np.mean(q_pi))
    if not (math.isfinite(critic_loss) and math.isfinite(actor_objective)):
        raise TrainingError(
            f"non-finite loss (critic {critic_loss}, actor {actor_objective}); "
            f"reward range [{reward.min()}, {reward.max()}]"
        )

    gw, gb, _ = mlp_backward(agent.critic, acts, (err / n)[:, None])
    _, _, gx = mlp_backward(agent.critic, c_acts, np.full((n, 1), 1.0 / n))
    dq_da = gx[:, -1:] / ACTION_SCALE
    aw, ab, _ = mlp_backward(agent.actor, a_acts, -dq_da)  # ascend Q

    agent.critic_opt.step(agent.critic, gw, gb)
    agent.actor_opt.step(agent.actor, aw, ab)
    soft_update(agent.critic_target, agent.critic, cfg.tau)
    soft_update(agent.actor_target, agent.actor, cfg.tau)
    return critic_loss, actor_objective


class Policy:
    """Deterministic shared policy: observation batch -> accelerations."""

    def __init__(self, actor: MlpParams, obs_dim):
        self.actor = actor
        self.obs_dim = obs_dim

    def __call__(self, obs):
        return mlp_forward(self.actor, obs)[..., 0]


# -- training loop ------------------------------------------------------------

@dataclass
class CurveRow:
    episode: int
    mean_reward: float
    mean_headway: float
    collisions: int


@dataclass
class TrainResult:
    agent: Ddpg
    curve: list = field(default_factory=list)

    @property
    def policy(self):
        return self.agent.policy()


def train(env: CarFollowingEnv, cfg: TrainConfig, progress=None) -> TrainResult:
    """Train one shared policy from every agent's pooled experience.

    Episode ``k`` resets the scenario with seed ``cfg.seed + k``.  Each
    episode is capped at ``cfg.steps`` steps.  ``progress(row)`` is called
    after each episode.
    """
    if not env.agents:
        raise ValueError("scenario has no rl agents to train")
    rng = np.random.default_rng(cfg.seed)
    agent = Ddpg(env.obs_dim, cfg, rng)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.obs_dim, rng)
    result = TrainResult(agent)
    noise = cfg.noise * ACTION_SCALE
    start = max(cfg.batch_size, cfg.warmup)

    def on_step(transitions):
        for tr in transitions:
            buffer.add(tr)
        if len(buffer) >= start:
            for _ in range(cfg.updates_per_step):
                ddpg_update(agent, buffer.sample(cfg.batch_size))

    for ep in range(cfg.episodes):
        res = run_episode(
            agent.policy(), env, explore=True, noise_std=noise, rng=rng,
            seed=cfg.seed + ep, on_step=on_step, max_steps=cfg.steps,
        )
        m = res.metrics
        row = CurveRow(ep, res.mean_reward, m.mean_time_headway, m.collision_count)
        if res.collided:
            log.warning("episode %d ended in a collision", ep)
        result.curve.append(row)
        if progress is not None:
            progress(row)
        noise *= cfg.noise_decay
    return result


def write_curve(path, curve):
    with open(path, "w") as fh:
        fh.write("episode,mean_reward,mean_headway,collisions\n")
        for r in curve:
            fh.write(f"{r.episode},{r.mean_reward:.6g},{r.mean_headway:.6g},{r.collisions}\n")


# -- checkpoints --------------------------------------------------------------

def _pack(prefix, params, arrays):
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"{prefix}.w{k}"] = w
        arrays[f"{prefix}.b{k}"] = b


def _unpack(prefix, meta, data):
    n = len(meta["sizes"]) - 1
    return MlpParams(
        [data[f"{prefix}.w{k}"].copy() for k in range(n)],
        [data[f"{prefix}.b{k}"].copy() for k in range(n)],
        meta["hidden_activation"], meta["output_activation"], meta["output_scale"],
    )


def _meta(params):
    return {
        "sizes": params.sizes,
        "hidden_activation": params.hidden_activation,
        "output_activation": params.output_activation,
        "output_scale": params.output_scale,
    }


def save_checkpoint(path, agent: Ddpg, episodes, variant="bilateral"):
    """Write actor and critic as an ``.npz`` archive with a JSON header."""
    header = {
        "format": "bilateral-cf-policy",
        "version": CHECKPOINT_VERSION,
        "obs_dim": agent.obs_dim,
        "variant": variant,
        "seed": agent.cfg.seed,
        "episodes": int(episodes),
        "actor": _meta(agent.actor),
        "critic": _meta(agent.critic),
        "train_config": asdict(agent.cfg),
    }
    arrays = {"header": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    _pack("actor", agent.actor, arrays)
    _pack("critic", agent.critic, arrays)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


@dataclass
class Checkpoint:
    header: dict
    actor: MlpParams
    critic: MlpParams

    @property
    def policy(self):
        return Policy(self.actor, self.header["obs_dim"])


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != "bilateral-cf-policy":
            raise ValueError(f"{path} is not a policy checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        actor = _unpack("actor", header["actor"], data)
        critic = _unpack("critic", header["critic"], data)
    return Checkpoint(header, actor, critic)
