"""Differentiable ring-attractor recurrent layer.

Input-to-hidden and hidden-to-hidden weights are learnable base matrices
multiplied elementwise by a distance kernel ``exp(-d / lambda)`` over circular
distance, so neighbouring ring units share input and recurrent drive.
The output is ``q = beta * tanh(phi @ W_ih / tau + h_prev @ W_hh)``.

Gradients are exact for a single step; the carried hidden state is treated
as a constant.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("base_ih", "base_hh", "log_lambda", "log_tau", "beta")


def ih_distance(m_in: int, n_hidden: int) -> np.ndarray:
    """Distance from previous-layer unit m to ring unit n projected into m's coordinates."""
    m = np.arange(m_in)[:, None].astype(float)
    n = np.arange(n_hidden)[None, :] * (m_in / n_hidden)
    d = np.abs(m - n)
    return np.minimum(d, m_in - d)


def hh_distance(n_hidden: int) -> np.ndarray:
    idx = np.arange(n_hidden)
    d = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(d, n_hidden - d).astype(float)


@dataclass
class RnnConfig:
    lambda_init: float = 2.0
    tau_init: float = 1.0
    beta_init: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> "RnnConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown rnn config keys: {sorted(unknown)}")
        return cls(**data)


class RingRnnLayer:
    def __init__(self, m_in: int, n_hidden: int, rng: np.random.Generator | None = None,
                 ring_enabled: bool = True, lambda_init: float = 2.0, tau_init: float = 1.0,
                 beta_init: float = 1.0):
        if m_in < 1 or n_hidden < 1:
            raise ValueError("layer sizes must be positive")
        if lambda_init <= 0 or tau_init <= 0:
            raise ValueError("lambda and tau must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.m_in = m_in
        self.n_hidden = n_hidden
        self.ring_enabled = ring_enabled
        self.base_ih = rng.uniform(-1, 1, (m_in, n_hidden)) / math.sqrt(m_in)
        self.base_hh = rng.uniform(-1, 1, (n_hidden, n_hidden)) / math.sqrt(n_hidden)
        self.log_lambda = np.array(math.log(lambda_init))
        self.log_tau = np.array(math.log(tau_init))
        self.beta = np.array(float(beta_init))
        self._d_ih = ih_distance(m_in, n_hidden)
        self._d_hh = hh_distance(n_hidden)

    @property
    def lambda_decay(self) -> float:
        return float(np.exp(self.log_lambda))

    @property
    def tau_rnn(self) -> float:
        return float(np.exp(self.log_tau))

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def set_params(self, params: dict):
        for name in PARAM_NAMES:
            setattr(self, name, np.array(params[name], dtype=float, copy=True))

    def copy(self) -> "RingRnnLayer":
        clone = object.__new__(RingRnnLayer)
        clone.__dict__.update(self.__dict__)
        clone.set_params(self.params())
        return clone

    def to_dict(self) -> dict:
        d = {name: np.asarray(v).tolist() for name, v in self.params().items()}
        d.update(m_in=self.m_in, n_hidden=self.n_hidden, ring_enabled=self.ring_enabled)
        return d

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n_hidden)


def build_circular_kernel(layer: RingRnnLayer, kind: str) -> np.ndarray:
    if kind == "input-to-hidden":
        d = layer._d_ih
    elif kind == "hidden-to-hidden":
        d = layer._d_hh
    else:
        raise ValueError(f"kind must be 'input-to-hidden' or 'hidden-to-hidden', got {kind!r}")
    if not layer.ring_enabled:
        return np.ones_like(d)
    return np.exp(-d / layer.lambda_decay)


def forward(layer: RingRnnLayer, phi, h_prev):
    """Return ``(q, h)``; ``phi`` and ``h_prev`` may carry a leading batch axis."""
    phi = np.asarray(phi, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(h_prev))):
        raise FloatingPointError("non-finite input to ring rnn forward")
    w_ih = layer.base_ih * build_circular_kernel(layer, "input-to-hidden")
    w_hh = layer.base_hh * build_circular_kernel(layer, "hidden-to-hidden")
    h = np.tanh(phi @ w_ih / layer.tau_rnn + h_prev @ w_hh)
    return layer.beta * h, h


@dataclass
class RnnGrads:
    base_ih: np.ndarray
    base_hh: np.ndarray
    lambda_decay: float
    tau_rnn: float
    beta: float
    phi: np.ndarray

    def for_params(self, layer: RingRnnLayer) -> dict:
        """Gradients with respect to the stored (log-reparameterised) parameters."""
        return {
            "base_ih": self.base_ih,
            "base_hh": self.base_hh,
            "log_lambda": np.array(self.lambda_decay * layer.lambda_decay),
            "log_tau": np.array(self.tau_rnn * layer.tau_rnn),
            "beta": np.array(self.beta),
        }


def backward(layer: RingRnnLayer, phi, h_prev, upstream_grad) -> RnnGrads:
    """Gradient of ``sum(upstream_grad * q)``; batched inputs sum over the batch."""
    phi = np.asarray(phi, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    g = np.asarray(upstream_grad, dtype=float)
    lam, tau = layer.lambda_decay, layer.tau_rnn
    k_ih = build_circular_kernel(layer, "input-to-hidden")
    k_hh = build_circular_kernel(layer, "hidden-to-hidden")
    w_ih = layer.base_ih * k_ih
    w_hh = layer.base_hh * k_hh
    drive = phi @ w_ih
    h = np.tanh(drive / tau + h_prev @ w_hh)

    g_beta = float(np.sum(g * h))
    g_pre = g * layer.beta * (1.0 - h**2)
    phi2, h2, gp2 = np.atleast_2d(phi), np.atleast_2d(h_prev), np.atleast_2d(g_pre)
    g_wih = phi2.T @ gp2 / tau
    g_whh = h2.T @ gp2
    g_tau = float(-np.sum(drive * g_pre) / tau**2)
    if layer.ring_enabled:
        # dK/dlambda = K * d / lambda^2
        g_lam = float(np.sum(g_wih * layer.base_ih * k_ih * layer._d_ih)
                      + np.sum(g_whh * layer.base_hh * k_hh * layer._d_hh)) / lam**2
    else:
        g_lam = 0.0
    return RnnGrads(
        base_ih=g_wih * k_ih,
        base_hh=g_whh * k_hh,
        lambda_decay=g_lam,
        tau_rnn=g_tau,
        beta=g_beta,
        phi=g_pre @ w_ih.T / tau,
    )


def sgd_step(layer: RingRnnLayer, grads: RnnGrads, lr: float):
    for name, g in grads.for_params(layer).items():
        setattr(layer, name, getattr(layer, name) - lr * g)
