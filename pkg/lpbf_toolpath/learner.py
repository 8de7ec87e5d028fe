"""
Deep Q-learning over the toolpath environment

A small fully connected value network in numpy with hand-written
backpropagation, Adam/SGD updates, a ring-buffer replay memory and a
periodically synced target network.
"""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from .config import TrainConfig
from .env import N_ACTIONS, OBSERVATION_DIM, ToolpathEnv
from .errors import ModelFormatError, NonFiniteLossError

logger = logging.getLogger(__name__)

MODEL_VERSION = 1


class QNetwork:
    """
    Multilayer perceptron Q(s, .) with rectifier hidden layers and a linear
    output layer
    """

    def __init__(self, dims=(OBSERVATION_DIM, 128, 128, N_ACTIONS), rng=None):
        """
        Args:
            dims: Layer widths, input first and action count last
            rng: numpy Generator for the fan-in scaled uniform initialization
        """
        dims = tuple(int(d) for d in dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid network dimensions {dims}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.dims = dims
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))
        self.metadata = {}

    @property
    def parameters(self):
        return self.weights + self.biases

    def copy(self):
        clone = QNetwork.__new__(QNetwork)
        clone.dims = self.dims
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        clone.metadata = dict(self.metadata)
        return clone

    def load_state(self, other):
        """Copy parameters from another network of the same shape"""
        if other.dims != self.dims:
            raise ValueError(f"shape mismatch: {other.dims} vs {self.dims}")
        for dst, src in zip(self.parameters, other.parameters):
            dst[...] = src

    def _check_input(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.dims[0]:
            raise ValueError(f"observation has {obs.shape[-1]} features, network expects {self.dims[0]}")
        return obs

    def _forward(self, x):
        activations = [x]
        pre = []
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            pre.append(z)
            activations.append(z if layer == len(self.weights) - 1 else np.maximum(z, 0.0))
        return activations, pre

    def forward(self, obs):
        """Q values for one observation (shape (3,)) or a batch (shape (B, 3))"""
        obs = self._check_input(obs)
        activations, _ = self._forward(np.atleast_2d(obs))
        out = activations[-1]
        return out[0] if obs.ndim == 1 else out

    __call__ = forward

    def loss_and_gradients(self, obs, actions, targets):
        """
        Mean squared error between Q(s, a) and the targets, and its gradient

        Returns:
            (loss, [dW...] + [db...]) in the order of `parameters`
        """
        obs = np.atleast_2d(self._check_input(obs))
        actions = np.asarray(actions, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        batch = len(obs)

        activations, pre = self._forward(obs)
        q = activations[-1]
        rows = np.arange(batch)
        error = q[rows, actions] - targets
        loss = float(np.mean(error ** 2))

        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * error / batch
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = activations[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre[layer - 1] > 0)
        return loss, grad_w + grad_b

    def to_dict(self):
        return {
            "dims": list(self.dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    def __repr__(self):
        return f"QNetwork(dims={'->'.join(map(str, self.dims))})"


class SGD:
    def __init__(self, lr=0.001):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    """Adam with bias correction; state is kept per parameter position"""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg):
    if cfg.optimizer == "sgd":
        return SGD(cfg.learning_rate)
    return Adam(cfg.learning_rate)


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayMemory:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first"""

    def __init__(self, capacity=1000, obs_dim=OBSERVATION_DIM, rng=None):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng() if rng is None else rng
        self.obs = np.zeros((self.capacity, obs_dim))
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.dones = np.zeros(self.capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, transition):
        k = self._next
        self.obs[k] = transition.obs
        self.actions[k] = transition.action
        self.rewards[k] = transition.reward
        self.next_obs[k] = transition.next_obs
        self.dones[k] = transition.done
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch_size):
        if batch_size > self._size:
            raise ValueError(f"cannot sample {batch_size} from {self._size} transitions")
        return self.rng.choice(self._size, size=batch_size, replace=False)

    def sample(self, batch_size):
        """(obs, actions, rewards, next_obs, dones) arrays of a uniform minibatch"""
        idx = self.sample_indices(batch_size)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]


def epsilon(n, cfg):
    """Exploration rate after n episodes: e1 + (e0 - e1) exp(-n / decay)"""
    if n < 0:
        raise ValueError("episode number must be >= 0")
    return cfg.epsilon_end + (cfg.epsilon_start - cfg.epsilon_end) * math.exp(-n / cfg.epsilon_decay)


def bellman_target(r, q_next, terminal, gamma):
    if not 0 <= gamma < 1:
        raise ValueError("gamma must be in [0, 1)")
    if terminal:
        return float(r)
    return float(r) + gamma * float(np.max(q_next))


def bellman_targets(rewards, q_next, dones, gamma):
    return rewards + gamma * q_next.max(axis=1) * (~np.asarray(dones, dtype=bool))


def train_step(net, target_net, batch, gamma, optimizer):
    """
    One gradient update of net on a minibatch

    Targets come from target_net and are treated as constants.

    Returns:
        Loss before the update
    """
    obs, actions, rewards, next_obs, dones = batch
    if len(obs) == 0:
        raise ValueError("empty minibatch")
    targets = bellman_targets(np.asarray(rewards, dtype=np.float64), target_net.forward(np.atleast_2d(next_obs)),
                              dones, gamma)
    loss, grads = net.loss_and_gradients(obs, actions, targets)
    if not math.isfinite(loss):
        q_max = float(np.max(np.abs(net.forward(np.atleast_2d(obs)))))
        raise NonFiniteLossError(f"non-finite loss {loss} (batch={len(obs)}, max|Q|={q_max:.3e})")
    optimizer.step(net.parameters, grads)
    return loss


class DQNAgent:
    """Main and target networks, optimizer and replay memory"""

    def __init__(self, config=None, obs_dim=OBSERVATION_DIM, n_actions=N_ACTIONS, rng=None):
        self.config = config or TrainConfig()
        cfg = self.config
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng
        dims = (obs_dim,) + (cfg.hidden_units,) * cfg.hidden_layers + (n_actions,)
        self.net = QNetwork(dims, self.rng)
        self.target_net = self.net.copy()
        self.optimizer = make_optimizer(cfg)
        self.memory = ReplayMemory(cfg.replay_size, obs_dim, self.rng)
        self.env_steps = 0

        logger.info("DQN: %s, %s lr=%g gamma=%g batch=%d replay=%d target_update=%d",
                    self.net, cfg.optimizer, cfg.learning_rate, cfg.gamma, cfg.batch_size,
                    cfg.replay_size, cfg.target_update)

    def act(self, obs, eps):
        if self.rng.random() < eps:
            return int(self.rng.integers(self.net.dims[-1]))
        return int(np.argmax(self.net.forward(obs)))

    def observe(self, transition):
        """Store a transition, learn once the replay holds a batch, sync the target on schedule"""
        self.memory.push(transition)
        self.env_steps += 1
        loss = None
        if len(self.memory) >= self.config.batch_size:
            loss = train_step(self.net, self.target_net, self.memory.sample(self.config.batch_size),
                              self.config.gamma, self.optimizer)
        if self.env_steps % self.config.target_update == 0:
            self.target_net.load_state(self.net)
        return loss


@dataclass
class EpisodeRecord:
    episode: int
    total_reward: float
    sensitive_count: int
    collisions: int
    isolated: int
    steps: int
    epsilon: float
    void_moves: int = 0
    loss_mean: float = float("nan")
    loss_max: float = float("nan")


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, record):
        self.records.append(record)

    @property
    def rewards(self):
        return [r.total_reward for r in self.records]

    @property
    def sensitive_counts(self):
        return [r.sensitive_count for r in self.records]


def _make_env(env_factory):
    return env_factory() if callable(env_factory) else env_factory


def train(env_factory, cfg=None, callback=None, progress=True):
    """
    Train a policy with epsilon-greedy episodes over the environment

    Args:
        env_factory: ToolpathEnv or a callable returning one
        cfg: TrainConfig
        callback: Optional callable(episode_number, agent, env, record) run
                  after every episode
        progress: Show a tqdm bar

    Returns:
        (policy QNetwork, TrainingLog)
    """
    cfg = cfg or TrainConfig()
    env = _make_env(env_factory)
    if env.n_points < 2:
        raise ValueError("training needs at least 2 sample points")
    agent = DQNAgent(cfg)
    log = TrainingLog()

    bar = tqdm(range(cfg.episodes), desc="episodes", unit="ep", disable=not progress)
    for episode in bar:
        eps = epsilon(episode, cfg)
        obs = env.reset()
        losses = []
        while not env.done:
            action = agent.act(obs, eps)
            out = env.step(action)
            loss = agent.observe(Transition(obs, action, out.reward.total, out.observation, out.done))
            if loss is not None:
                losses.append(loss)
            obs = out.observation

        stats = env.stats
        record = EpisodeRecord(
            episode=episode + 1, total_reward=stats.total_reward, sensitive_count=stats.sensitive_count,
            collisions=stats.collisions, isolated=stats.isolated, steps=stats.steps, epsilon=eps,
            void_moves=stats.void_moves,
            loss_mean=float(np.mean(losses)) if losses else float("nan"),
            loss_max=float(np.max(losses)) if losses else float("nan"),
        )
        log.append(record)
        bar.set_postfix(reward=f"{stats.total_reward:.3f}", sensitive=stats.sensitive_count)
        if callback is not None:
            callback(episode + 1, agent, env, record)

    logger.info("Training finished: %d episodes, final reward %.4f", cfg.episodes,
                log.records[-1].total_reward if log.records else float("nan"))
    return agent.net, log


def evaluate_policy(policy, grid, env_config=None, velocity=1000.0, metadata=None):
    """
    Greedy (epsilon = 0) episode of a policy

    Returns:
        (Toolpath, EpisodeStats)
    """
    env = ToolpathEnv(grid, env_config, velocity)
    obs = env.observe()
    while not env.done:
        obs = env.step(int(np.argmax(policy.forward(obs)))).observation
    return env.toolpath(metadata), env.stats


def greedy_rollout(policy, grid, env_config=None, velocity=1000.0, metadata=None):
    path, _ = evaluate_policy(policy, grid, env_config, velocity, metadata)
    return path


def save_model(net, path, config=None, calibration=None):
    """
    Write the network as versioned JSON

    Args:
        config: Optional settings snapshot stored alongside
        calibration: Optional calibration values, e.g. {"absorptivity": 0.7}
    """
    data = {"version": MODEL_VERSION}
    data.update(net.to_dict())
    data["config"] = config or {}
    data["calibration"] = calibration or {}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)
        fh.write("\n")


def load_model(path, expected_input=None):
    """
    Read a model written by save_model

    Returns:
        QNetwork with `metadata` holding the stored config and calibration
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ModelFormatError(f"model file {path} does not exist")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"model file {path} is corrupt: {e}")

    if not isinstance(data, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = data.get("version")
    if str(version) != str(MODEL_VERSION):
        raise ModelFormatError(f"unsupported model version {version!r} (expected {MODEL_VERSION})")

    try:
        dims = tuple(int(d) for d in data["dims"])
        weights = [np.asarray(w, dtype=np.float64) for w in data["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in data["biases"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"model file {path} is incomplete: {e}")

    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise ModelFormatError(f"model has {len(weights)} layers for dims {dims}")
    for layer, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[layer], dims[layer + 1]) or b.shape != (dims[layer + 1],):
            raise ModelFormatError(f"layer {layer} has shape {w.shape}/{b.shape}, dims say {dims}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ModelFormatError(f"layer {layer} holds non-finite parameters")
    if expected_input is not None and dims[0] != expected_input:
        raise ModelFormatError(f"model expects {dims[0]} input features, observation has {expected_input}")

    net = QNetwork.__new__(QNetwork)
    net.dims = dims
    net.weights = weights
    net.biases = biases
    net.metadata = {"config": data.get("config", {}), "calibration": data.get("calibration", {})}
    return net
