"""Actor-critic PPO in plain numpy.

Two fully connected ReLU networks share nothing but the input: the actor
maps an observation to ``n_actions`` logits, the critic to one value.
Gradients are computed by explicit backpropagation so they can be checked
against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

CKPT_MAGIC = "DBF-CKPT"
CKPT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    pass


class CheckpointError(ValueError):
    pass


class MalformedCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class ShapeMismatchError(ValueError):
    pass


class PolicyParams:
    """Named weight tensors stored as views into one flat vector."""

    def __init__(self, obs_dim: int, n_actions: int, hidden, shapes: Optional[dict] = None,
                 flat: Optional[np.ndarray] = None):
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.hidden = tuple(int(h) for h in hidden)
        if shapes is None:
            shapes = {}
            for net, out in (("actor", self.n_actions), ("critic", 1)):
                for i, (fan_in, fan_out) in enumerate(_layer_sizes(self.obs_dim, self.hidden, out)):
                    shapes[f"{net}.w{i}"] = (fan_in, fan_out)
                    shapes[f"{net}.b{i}"] = (fan_out,)
        self.shapes = dict(shapes)
        size = sum(int(np.prod(s)) for s in self.shapes.values())
        self.flat = np.zeros(size) if flat is None else flat
        if self.flat.shape != (size,):
            raise ShapeMismatchError(f"expected {size} parameters, got {self.flat.shape}")
        self.tensors = {}
        pos = 0
        for name, shape in self.shapes.items():
            n = int(np.prod(shape))
            self.tensors[name] = self.flat[pos:pos + n].reshape(shape)
            pos += n

    def names(self, net: str) -> list:
        return [k for k in self.tensors if k.startswith(net + ".")]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.obs_dim, self.n_actions, self.hidden, self.shapes, self.flat.copy())

    def flatten(self, grads: dict) -> np.ndarray:
        """Gradient dict laid out like ``flat``."""
        return np.concatenate([grads[name].ravel() for name in self.shapes])

    def check_dims(self, obs_dim: int, n_actions: int) -> None:
        if (obs_dim, n_actions) != (self.obs_dim, self.n_actions):
            raise ShapeMismatchError(
                f"parameters built for obs_dim={self.obs_dim}, actions={self.n_actions}; "
                f"environment has obs_dim={obs_dim}, actions={n_actions}")


def _layer_sizes(obs_dim, hidden, out):
    sizes = [obs_dim, *hidden, out]
    return list(zip(sizes[:-1], sizes[1:]))


def init_params(obs_dim: int, n_actions: int, hidden: Sequence[int] = (64, 64),
                rng: Optional[np.random.Generator] = None) -> PolicyParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases; the actor's
    last layer is scaled by 0.01 so the initial policy is close to uniform."""
    rng = rng if rng is not None else np.random.default_rng(0)
    p = PolicyParams(obs_dim, n_actions, hidden)
    for net, out in (("actor", n_actions), ("critic", 1)):
        layers = _layer_sizes(obs_dim, p.hidden, out)
        for i, (fan_in, fan_out) in enumerate(layers):
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if net == "actor" and i == len(layers) - 1:
                w *= 0.01
            p.tensors[f"{net}.w{i}"][...] = w
    return p


def _forward(params: PolicyParams, net: str, x: np.ndarray, cache: Optional[list] = None):
    t = params.tensors
    n = len(params.hidden) + 1
    h = x
    for i in range(n):
        if cache is not None:
            cache.append(h)
        h = h @ t[f"{net}.w{i}"] + t[f"{net}.b{i}"]
        if i < n - 1:
            h = np.maximum(h, 0.0)
    return h


def _backward(params: PolicyParams, net: str, cache: list, dout: np.ndarray, grads: dict):
    t = params.tensors
    n = len(params.hidden) + 1
    d = dout
    for i in range(n - 1, -1, -1):
        a = cache[i]
        grads[f"{net}.w{i}"] = a.T @ d
        grads[f"{net}.b{i}"] = d.sum(axis=0)
        if i > 0:
            d = (d @ t[f"{net}.w{i}"].T) * (a > 0)


def _check_obs(params, obs):
    if obs.shape[-1] != params.obs_dim:
        raise ShapeMismatchError(f"observation has {obs.shape[-1]} features, expected {params.obs_dim}")


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_forward(params: PolicyParams, obs) -> np.ndarray:
    """Action probabilities for one observation (or a batch of them)."""
    obs = np.asarray(obs, dtype=float)
    _check_obs(params, obs)
    return _softmax(_forward(params, "actor", obs))


def value_forward(params: PolicyParams, obs):
    obs = np.asarray(obs, dtype=float)
    _check_obs(params, obs)
    v = _forward(params, "critic", obs)[..., 0]
    return float(v) if v.ndim == 0 else v


def entropy(probs: np.ndarray) -> np.ndarray:
    logp = np.log(np.clip(probs, 1e-300, None))
    return -(probs * logp).sum(axis=-1)


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def gae_advantages(rewards, values, gamma, lam):
    """Generalized advantage estimates for one terminated episode."""
    values = np.asarray(values, dtype=float)
    nxt = np.append(values[1:], 0.0)
    deltas = np.asarray(rewards, dtype=float) + gamma * nxt - values
    return discounted_returns(deltas, gamma * lam)


@dataclass
class PPOHyperparams:
    lr: float = 3e-4
    clip: float = 0.2
    gamma: float = 0.99
    minibatch: int = 128
    epochs: int = 4
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    # None keeps the plain return-minus-value advantage
    gae_lambda: Optional[float] = None
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if self.minibatch < 1 or self.epochs < 1:
            raise ValueError("minibatch and epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    returns: np.ndarray
    advantages: np.ndarray

    def __len__(self):
        return len(self.actions)

    def take(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.old_logp[idx],
                     self.returns[idx], self.advantages[idx])


def clipped_surrogate(ratio, adv, clip):
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)


def ppo_objective(batch: Batch, params: PolicyParams, hyper: PPOHyperparams):
    """Clipped-surrogate PPO loss plus value and entropy terms, with gradients.

    Returns ``(loss, grads)`` where ``grads`` maps tensor names to arrays.
    """
    B = len(batch)
    cache_a, cache_c = [], []
    logits = _forward(params, "actor", batch.obs, cache_a)
    logp_all = _log_softmax(logits)
    probs = np.exp(logp_all)
    rows = np.arange(B)
    logp = logp_all[rows, batch.actions]
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip) * adv
    surr = np.minimum(unclipped, clipped)
    ent = -(probs * logp_all).sum(axis=1)
    values = _forward(params, "critic", batch.obs, cache_c)[:, 0]
    verr = values - batch.returns

    loss = -surr.mean() + hyper.value_coef * np.mean(verr ** 2) - hyper.entropy_coef * ent.mean()
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"PPO loss is {loss}")

    # d(-mean surr)/d ratio flows only where the unclipped branch is the minimum
    d_ratio = np.where(unclipped <= clipped, -adv / B, 0.0)
    onehot = np.zeros_like(probs)
    onehot[rows, batch.actions] = 1.0
    d_logits = (d_ratio * ratio)[:, None] * (onehot - probs)
    d_logits += (hyper.entropy_coef / B) * probs * (logp_all + ent[:, None])
    d_values = (2.0 * hyper.value_coef / B) * verr

    grads: dict = {}
    _backward(params, "actor", cache_a, d_logits, grads)
    _backward(params, "critic", cache_c, d_values[:, None], grads)
    return float(loss), grads


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1 - self.beta2) * g * g
        step = self.lr * math.sqrt(1.0 - self.beta2 ** self.t) / (1.0 - self.beta1 ** self.t)
        x -= step * self.m / (np.sqrt(self.v) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, x: np.ndarray, g: np.ndarray) -> None:
        x -= self.lr * g


def make_optimizer(hyper: PPOHyperparams):
    return Adam(hyper.lr) if hyper.optimizer == "adam" else SGD(hyper.lr)


class RolloutBuffer:
    """Transitions of one episode; closed by a transition with ``done=True``."""

    def __init__(self):
        self.obs, self.actions, self.logp, self.rewards, self.values, self.dones = [], [], [], [], [], []

    def __len__(self):
        return len(self.actions)

    def add(self, obs, action, logp, reward, value, done):
        if self.closed:
            raise ValueError("buffer already holds a finished episode")
        self.obs.append(obs)
        self.actions.append(int(action))
        self.logp.append(float(logp))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))

    @property
    def closed(self) -> bool:
        return bool(self.dones) and self.dones[-1]


def build_batch(buffer: RolloutBuffer, params: PolicyParams, hyper: PPOHyperparams) -> Batch:
    obs = np.asarray(buffer.obs, dtype=float)
    values = value_forward(params, obs)
    values = np.atleast_1d(values)
    if hyper.gae_lambda is None:
        returns = discounted_returns(buffer.rewards, hyper.gamma)
        adv = returns - values
    else:
        adv = gae_advantages(buffer.rewards, values, hyper.gamma, hyper.gae_lambda)
        returns = adv + values
    if len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return Batch(obs, np.asarray(buffer.actions), np.asarray(buffer.logp), returns, adv)


def update(buffer: RolloutBuffer, params: PolicyParams, hyper: PPOHyperparams,
           rng: Optional[np.random.Generator] = None, optimizer=None) -> PolicyParams:
    """Run ``hyper.epochs`` shuffled minibatch passes over one finished episode.

    Returns new parameters; ``params`` itself is never modified, so a
    non-finite loss leaves the caller's parameters intact.
    """
    if not buffer.closed:
        raise ValueError("update needs a finished episode")
    rng = rng if rng is not None else np.random.default_rng(hyper.seed)
    optimizer = optimizer if optimizer is not None else make_optimizer(hyper)
    new = params.copy()
    batch = build_batch(buffer, new, hyper)
    n = len(batch)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, hyper.minibatch):
            _, grads = ppo_objective(batch.take(order[lo:lo + hyper.minibatch]), new, hyper)
            optimizer.step(new.flat, new.flatten(grads))
    return new


class PPOAgent:
    """Parameters, optimizer state and a seeded generator for sampling and shuffling."""

    def __init__(self, params: PolicyParams, hyper: PPOHyperparams, seed: Optional[int] = None):
        self.params = params
        self.hyper = hyper
        self.rng = np.random.default_rng(hyper.seed if seed is None else seed)
        self.optimizer = make_optimizer(hyper)

    @classmethod
    def create(cls, obs_dim, n_actions, hyper: PPOHyperparams, hidden=(64, 64)):
        rng = np.random.default_rng(hyper.seed)
        return cls(init_params(obs_dim, n_actions, hidden, rng), hyper)

    def act(self, obs, greedy=False):
        """Returns (action, log-probability, value estimate)."""
        probs = policy_forward(self.params, obs)
        if greedy:
            a = int(np.argmax(probs))
        else:
            a = int(np.searchsorted(np.cumsum(probs), self.rng.random() * probs.sum(), side="right"))
            a = min(a, len(probs) - 1)
        return a, math.log(max(probs[a], 1e-300)), value_forward(self.params, obs)

    def learn(self, buffer: RolloutBuffer) -> None:
        self.params = update(buffer, self.params, self.hyper, self.rng, self.optimizer)


def save_checkpoint(params: PolicyParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{CKPT_MAGIC} {CKPT_VERSION}\n")
        fh.write(f"obs_dim {params.obs_dim}\n")
        fh.write(f"n_actions {params.n_actions}\n")
        fh.write("hidden " + " ".join(str(h) for h in params.hidden) + "\n")
        fh.write(f"tensors {len(params.tensors)}\n")
        for name, arr in params.tensors.items():
            fh.write(f"{name} {arr.ndim} " + " ".join(str(d) for d in arr.shape) + "\n")
            fh.write(" ".join(repr(float(x)) for x in arr.ravel().tolist()) + "\n")


def load_checkpoint(path, obs_dim: Optional[int] = None, n_actions: Optional[int] = None) -> PolicyParams:
    """Read a checkpoint; optional dims are checked and raise ShapeMismatchError."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    try:
        magic, version = lines[0].split()
    except ValueError:
        raise MalformedCheckpointError(f"{path}: bad header line {lines[0][:40]!r}") from None
    if magic != CKPT_MAGIC:
        raise MalformedCheckpointError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != str(CKPT_VERSION):
        raise CheckpointVersionError(f"{path}: version {version}, expected {CKPT_VERSION}")
    try:
        meta = {}
        for line in lines[1:5]:
            key, *vals = line.split()
            meta[key] = [int(v) for v in vals]
        params = PolicyParams(meta["obs_dim"][0], meta["n_actions"][0], tuple(meta["hidden"]))
        loaded = {}
        pos = 5
        for _ in range(meta["tensors"][0]):
            head = lines[pos].split()
            name, ndim = head[0], int(head[1])
            shape = tuple(int(d) for d in head[2:2 + ndim])
            loaded[name] = np.array([float(v) for v in lines[pos + 1].split()]).reshape(shape)
            pos += 2
    except (KeyError, IndexError, ValueError) as exc:
        raise MalformedCheckpointError(f"{path}: {exc}") from None
    if set(loaded) != set(params.tensors):
        raise MalformedCheckpointError(f"{path}: tensor names do not match the layer layout")
    for name, arr in loaded.items():
        if arr.shape != params.tensors[name].shape:
            raise MalformedCheckpointError(f"{path}: tensor {name} has shape {arr.shape}")
        params.tensors[name][...] = arr
    if obs_dim is not None or n_actions is not None:
        params.check_dims(obs_dim if obs_dim is not None else params.obs_dim,
                          n_actions if n_actions is not None else params.n_actions)
    return params
