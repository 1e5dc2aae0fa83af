"""Value-based agents whose behaviour policy is a ring attractor (or not).

Every agent owns a feature extractor ``phi(s)`` and a Q head on top of it,
plus a periodically synced target copy of both. The variants differ only in
the head and in how Q estimates become actions:

==================  =================  ==========================================
variant             head               action selection
==================  =================  ==========================================
Baseline            linear             epsilon-greedy
Ring                linear             ring attractor, constant widths
RingUA              linear + BLR       ring attractor fed by Thompson statistics
RingRandomMap       linear             ring attractor, actions shuffled on ring
RnnRing             ring RNN layer     argmax of the layer output
RnnNoKernel         plain RNN layer    argmax of the layer output
==================  =================  ==========================================

Setting ``rnn_epsilon`` applies the epsilon schedule to the RNN variants too;
without it they have no exploration beyond their initial weights.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import rnn as ring_rnn
from .envs import ActionMapping, permute_mapping
from .errors import NoWinnerError
from .ring import DEFAULT_SIGMA, RingAttractor, RingConfig
from .rnn import RingRnnLayer, RnnConfig
from .uq import BlrPosterior, BlrPrior, action_stats, blr_update_arrays

log = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    BASELINE = "Baseline"
    RING = "Ring"
    RING_UA = "RingUA"
    RING_RANDOM_MAP = "RingRandomMap"
    RNN_RING = "RnnRing"
    RNN_NO_KERNEL = "RnnNoKernel"

    @property
    def uses_ring(self) -> bool:
        return self in (Variant.RING, Variant.RING_UA, Variant.RING_RANDOM_MAP)

    @property
    def uses_rnn(self) -> bool:
        return self in (Variant.RNN_RING, Variant.RNN_NO_KERNEL)


@dataclass
class AgentConfig:
    variant: Variant = Variant.BASELINE
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5000
    replay_capacity: int = 10_000
    batch_size: int = 32
    learning_rate: Optional[float] = None
    target_sync_interval: int = 500
    blr_update_interval: int = 1000
    thompson_I: int = 30
    features: str = "tabular"
    hidden_width: int = 64
    prior_variance: float = 1.0
    noise_variance: float = 1.0
    ring_sigma: float = DEFAULT_SIGMA
    rnn_epsilon: bool = False

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("epsilon_decay_steps", "replay_capacity", "batch_size",
                     "target_sync_interval", "blr_update_interval", "hidden_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.thompson_I < 2:
            raise ValueError("thompson_I must be at least 2")
        if self.features not in ("tabular", "mlp"):
            raise ValueError(f"features must be 'tabular' or 'mlp', got {self.features!r}")
        if self.learning_rate is None:
            self.learning_rate = 1e-2 if self.features == "tabular" else 1e-3

    def epsilon(self, step: int) -> float:
        if step >= self.epsilon_decay_steps:
            return self.epsilon_end
        frac = step / self.epsilon_decay_steps
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "AgentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool
    h_prev: Optional[np.ndarray] = None


# -- feature extractors -------------------------------------------------------

class TabularFeatures:
    """Identity map over a one-hot state; nothing to learn."""

    def __init__(self, state_dim: int):
        self.state_dim = state_dim
        self.dim = state_dim

    def params(self) -> dict:
        return {}

    def set_params(self, params: dict):
        pass

    def forward(self, s):
        return np.asarray(s, dtype=float), None

    def backward(self, cache, g_phi) -> dict:
        return {}


class MlpFeatures:
    """One tanh hidden layer: ``phi = tanh(s @ W + b)``."""

    def __init__(self, state_dim: int, width: int, rng: np.random.Generator):
        self.state_dim = state_dim
        self.dim = width
        self.W = rng.uniform(-1, 1, (state_dim, width)) / math.sqrt(state_dim)
        self.b = np.zeros(width)

    def params(self) -> dict:
        return {"W": self.W, "b": self.b}

    def set_params(self, params: dict):
        self.W = np.array(params["W"], dtype=float, copy=True)
        self.b = np.array(params["b"], dtype=float, copy=True)

    def forward(self, s):
        s = np.asarray(s, dtype=float)
        phi = np.tanh(s @ self.W + self.b)
        return phi, (s, phi)

    def backward(self, cache, g_phi) -> dict:
        s, phi = cache
        g_pre = np.atleast_2d(g_phi * (1.0 - phi**2))
        return {"W": np.atleast_2d(s).T @ g_pre, "b": g_pre.sum(axis=0)}


class LinearHead:
    def __init__(self, dim: int, n_actions: int):
        self.W = np.zeros((dim, n_actions))

    def params(self) -> dict:
        return {"W": self.W}

    def set_params(self, params: dict):
        self.W = np.array(params["W"], dtype=float, copy=True)


def _copy_params(params: dict) -> dict:
    return {k: np.array(v, copy=True) for k, v in params.items()}


# -- replay -------------------------------------------------------------------

class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, hidden_dim: int = 0):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.s_next = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.h_prev = np.zeros((capacity, hidden_dim))
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        i = self._next
        self.s[i], self.a[i], self.r[i] = t.s, t.a, t.r
        self.s_next[i], self.done[i] = t.s_next, t.done
        if t.h_prev is not None and self.h_prev.shape[1]:
            self.h_prev[i] = t.h_prev
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.size, size=batch_size)

    def batch(self, idx) -> list[Transition]:
        hid = self.h_prev.shape[1] > 0
        return [Transition(self.s[i], int(self.a[i]), float(self.r[i]), self.s_next[i],
                           bool(self.done[i]), self.h_prev[i] if hid else None) for i in idx]


# -- targets ------------------------------------------------------------------

def td_target(r: float, done: bool, phi_next, target_head: Callable, gamma: float) -> float:
    """``r`` at episode end, else ``r + gamma * max_a target_head(phi_next)[a]``."""
    if done:
        return float(r)
    return float(r + gamma * np.max(target_head(phi_next)))


# -- the agent ----------------------------------------------------------------

class Agent:
    def __init__(self, config: AgentConfig, state_dim: int, n_actions: int,
                 rng: np.random.Generator, ring_config: RingConfig | None = None,
                 rnn_config: RnnConfig | None = None):
        self.config = config
        self.variant = config.variant
        self.n_actions = n_actions
        self.rng = rng
        if config.features == "tabular":
            self.extractor = TabularFeatures(state_dim)
        else:
            self.extractor = MlpFeatures(state_dim, config.hidden_width, rng)
        dim = self.extractor.dim

        if self.variant.uses_rnn:
            rc = rnn_config or RnnConfig()
            self.head = RingRnnLayer(dim, n_actions, rng,
                                     ring_enabled=self.variant is Variant.RNN_RING,
                                     lambda_init=rc.lambda_init, tau_init=rc.tau_init,
                                     beta_init=rc.beta_init)
        else:
            self.head = LinearHead(dim, n_actions)

        self.ring = RingAttractor(ring_config) if self.variant.uses_ring else None
        self.mapping = ActionMapping(n_actions)
        if self.variant is Variant.RING_RANDOM_MAP:
            self.mapping = permute_mapping(self.mapping, rng)

        self.prior = BlrPrior(dim, config.prior_variance, config.noise_variance)
        self.posterior = BlrPosterior.from_prior(self.prior, n_actions) \
            if self.variant is Variant.RING_UA else None

        self.replay = ReplayBuffer(config.replay_capacity, state_dim,
                                   n_actions if self.variant.uses_rnn else 0)
        self.hidden = np.zeros(n_actions) if self.variant.uses_rnn else None
        self.steps = 0
        self.fallbacks = 0
        self._target_extractor = _clone_extractor(self.extractor)
        self._target_q_head = _clone_head(self.head)

    # parameters ------------------------------------------------------------

    def online_params(self) -> dict:
        return {"extractor": self.extractor.params(), "head": self.head.params()}

    def target_params(self) -> dict:
        return {"extractor": self._target_extractor.params(), "head": self._target_q_head.params()}

    def sync_target(self):
        self._target_extractor.set_params(_copy_params(self.extractor.params()))
        self._target_q_head.set_params(_copy_params(self.head.params()))

    def checkpoint(self) -> dict:
        def arrays(p):
            return {k: np.asarray(v).tolist() for k, v in p.items()}
        return {
            "variant": self.variant.value,
            "extractor": arrays(self.extractor.params()),
            "head": arrays(self.head.params()),
            "ring_enabled": getattr(self.head, "ring_enabled", None),
            "mapping_permutation": list(self.mapping.permutation),
        }

    def save_checkpoint(self, path):
        with open(path, "w") as fh:
            json.dump(self.checkpoint(), fh)

    def load_checkpoint(self, path):
        with open(path) as fh:
            data = json.load(fh)
        if data["variant"] != self.variant.value:
            raise ValueError(f"checkpoint is for {data['variant']}, agent is {self.variant.value}")
        self.extractor.set_params(data["extractor"])
        self.head.set_params(data["head"])

    # evaluation --------------------------------------------------------------

    def _q(self, extractor, head, s, h_prev=None):
        """Q values plus everything backprop needs."""
        phi, cache = extractor.forward(s)
        if self.variant.uses_rnn:
            q, h = ring_rnn.forward(head, phi, h_prev)
            return q, (phi, cache, h)
        return phi @ head.W, (phi, cache, None)

    def q_values(self, s, h_prev=None) -> np.ndarray:
        if self.variant.uses_rnn and h_prev is None:
            h_prev = self.hidden
        return self._q(self.extractor, self.head, s, h_prev)[0]

    def target_q_values(self, s, h_prev=None) -> np.ndarray:
        return self._q(self._target_extractor, self._target_q_head, s, h_prev)[0]

    def begin_episode(self):
        if self.hidden is not None:
            self.hidden = np.zeros(self.n_actions)

    # acting ------------------------------------------------------------------

    def select_action(self, s, rng: np.random.Generator) -> int:
        v = self.variant
        if v.uses_rnn:
            q, h = ring_rnn.forward(self.head, self.extractor.forward(s)[0], self.hidden)
            self.hidden = h
            if self.config.rnn_epsilon:
                return self._epsilon_greedy(q, rng)
            return int(np.argmax(q))
        if v is Variant.BASELINE:
            return self._epsilon_greedy(self.q_values(s), rng)
        if v is Variant.RING_UA:
            phi = self.extractor.forward(s)[0]
            stats = action_stats(self.posterior, phi, self.config.thompson_I, rng)
            mu, sigma = stats.mu, stats.sigma
        else:
            mu = self.q_values(s)
            sigma = np.full(self.n_actions, self.config.ring_sigma)
        try:
            return self.ring.select(mu, sigma, self.mapping)
        except NoWinnerError:
            self.fallbacks += 1
            log.warning("ring produced no winner; falling back to argmax of %s", mu)
            return int(np.argmax(mu))

    def _epsilon_greedy(self, q, rng) -> int:
        if rng.random() < self.config.epsilon(self.steps):
            return int(rng.integers(self.n_actions))
        return int(np.argmax(q))

    # learning ----------------------------------------------------------------

    def _targets(self, s, s_next, r, done, h_prev):
        if self.variant.uses_rnn:
            # hidden state the target net would carry into s_next
            _, h_s = ring_rnn.forward(self._target_q_head, self._target_extractor.forward(s)[0], h_prev)
            q_next = self.target_q_values(s_next, h_s)
        else:
            q_next = self.target_q_values(s_next)
        return r + self.config.gamma * (~done) * q_next.max(axis=1)

    def train_step(self, batch: Sequence[Transition]) -> float:
        """One SGD step on the mean squared TD error over ``batch``."""
        if not batch:
            raise ValueError("batch must be nonempty")
        s = np.array([t.s for t in batch])
        s_next = np.array([t.s_next for t in batch])
        a = np.array([t.a for t in batch])
        r = np.array([t.r for t in batch], dtype=float)
        done = np.array([t.done for t in batch], dtype=bool)
        h_prev = np.array([t.h_prev for t in batch]) if self.variant.uses_rnn else None
        return self._train_arrays(s, a, r, s_next, done, h_prev)

    def _train_arrays(self, s, a, r, s_next, done, h_prev) -> float:
        y = self._targets(s, s_next, r, done, h_prev)
        q, (phi, cache, _) = self._q(self.extractor, self.head, s, h_prev)
        rows = np.arange(len(a))
        err = q[rows, a] - y
        loss = float(np.mean(err**2))
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite TD loss {loss}")
        g_q = np.zeros_like(q)
        g_q[rows, a] = 2.0 * err / len(a)
        if self.variant.uses_rnn:
            grads = ring_rnn.backward(self.head, phi, h_prev, g_q)
            g_phi = grads.phi
            head_grads = grads.for_params(self.head)
        else:
            g_phi = g_q @ self.head.W.T
            head_grads = {"W": phi.T @ g_q}
        ext_grads = self.extractor.backward(cache, g_phi)
        lr = self.config.learning_rate
        _apply(self.head, head_grads, lr)
        _apply(self.extractor, ext_grads, lr)
        return loss

    def refresh_posterior(self):
        """Refit the per-action BLR posterior on the whole replay buffer."""
        n = len(self.replay)
        rb = self.replay
        phi = self.extractor.forward(rb.s[:n])[0]
        y = self._targets(rb.s[:n], rb.s_next[:n], rb.r[:n], rb.done[:n], None)
        self.posterior = blr_update_arrays(self.prior, rb.a[:n], np.atleast_2d(phi), y, self.n_actions)

    def observe(self, t: Transition) -> Optional[float]:
        """Record a transition and run whatever learning is due this step."""
        self.replay.push(t)
        self.steps += 1
        loss = None
        cfg = self.config
        if len(self.replay) >= cfg.batch_size:
            rb = self.replay
            idx = rb.indices(cfg.batch_size, self.rng)
            loss = self._train_arrays(rb.s[idx], rb.a[idx], rb.r[idx], rb.s_next[idx], rb.done[idx],
                                      rb.h_prev[idx] if self.variant.uses_rnn else None)
        if self.steps % cfg.target_sync_interval == 0:
            self.sync_target()
        if self.posterior is not None and self.steps % cfg.blr_update_interval == 0:
            self.refresh_posterior()
        return loss


def _apply(module, grads: dict, lr: float):
    params = module.params()
    module.set_params({k: params[k] - lr * grads[k] if k in grads else params[k] for k in params})


def _clone_extractor(ext):
    clone = object.__new__(type(ext))
    clone.__dict__.update(ext.__dict__)
    clone.set_params(_copy_params(ext.params()))
    return clone


def _clone_head(head):
    if isinstance(head, RingRnnLayer):
        return head.copy()
    clone = LinearHead(*head.W.shape)
    clone.set_params(_copy_params(head.params()))
    return clone


# functional aliases --------------------------------------------------------

def select_action(agent: Agent, state, rng: np.random.Generator) -> int:
    return agent.select_action(state, rng)


def train_step(agent: Agent, batch: Sequence[Transition]) -> float:
    return agent.train_step(batch)


def sync_target(agent: Agent):
    agent.sync_target()
