"""Exogenous ring attractor: Gaussian input encoding, E/I rate dynamics, decoding.

The ring holds ``N`` excitatory rate units at preferred angles ``2*pi*n/N`` and a
single inhibitory unit at unit distance from all of them. Action values enter
as Gaussian bumps of input; the network is integrated with explicit Euler until
the excitatory activity stops changing, and the position of the activity peak
is mapped back to a discrete action.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import NoWinnerError

TWO_PI = 2.0 * math.pi
SIGMA_MIN = 0.05
AMPLITUDE_FLOOR = 0.1
DEFAULT_SIGMA = math.pi / 6
KERNEL_CUTOFF = 1e-17


@dataclass(frozen=True)
class RingConfig:
    n_excitatory: int = 64
    tau: float = 1.0
    dt_ratio: float = 0.1
    threshold_h: float = 0.0
    excitatory_kernel_width: float = 1.0
    inhibitory_gain: float = 4.0
    inhibitory_self_gain: float = 0.5
    excitatory_to_inhibitory_gain: float = 1.0
    settle_tolerance: float = 1e-8
    settle_max_steps: int = 1000

    def __post_init__(self):
        if int(self.n_excitatory) != self.n_excitatory or self.n_excitatory < 2:
            raise ValueError(f"n_excitatory must be an integer >= 2, got {self.n_excitatory}")
        if not 0.0 < self.dt_ratio <= 1.0:
            raise ValueError(f"dt_ratio must lie in (0, 1], got {self.dt_ratio}")
        for name in ("tau", "excitatory_kernel_width", "inhibitory_gain",
                     "inhibitory_self_gain", "excitatory_to_inhibitory_gain",
                     "settle_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if not math.isfinite(self.threshold_h):
            raise ValueError("threshold_h must be finite")
        if int(self.settle_max_steps) != self.settle_max_steps or self.settle_max_steps < 1:
            raise ValueError(f"settle_max_steps must be a positive integer, got {self.settle_max_steps}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RingConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown ring config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class RingState:
    v: np.ndarray
    u: float = 0.0

    @classmethod
    def zeros(cls, n: int) -> "RingState":
        return cls(np.zeros(n), 0.0)


@dataclass(frozen=True)
class InputSignal:
    amplitude: float
    center: float
    width: float

    def __post_init__(self):
        if not self.width >= SIGMA_MIN:
            raise ValueError(f"signal width {self.width} is below the floor {SIGMA_MIN}")


@dataclass(frozen=True)
class RingKernels:
    w_ee: np.ndarray
    w_ie: np.ndarray
    w_ei: np.ndarray
    w_ii: float


def circular_distance(m: int, n: int, ring_size: int) -> int:
    if ring_size < 1:
        raise ValueError(f"ring_size must be positive, got {ring_size}")
    if not (0 <= m < ring_size and 0 <= n < ring_size):
        raise ValueError(f"indices ({m}, {n}) out of range for ring of size {ring_size}")
    d = abs(m - n)
    return min(d, ring_size - d)


def circular_distance_matrix(ring_size: int) -> np.ndarray:
    idx = np.arange(ring_size)
    d = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(d, ring_size - d)


def angular_difference(a, b):
    """Signed shortest angle from ``b`` to ``a``, in ``[-pi, pi)``. Works on arrays."""
    return np.mod(np.asarray(a, dtype=float) - b + math.pi, TWO_PI) - math.pi


def preferred_angles(n: int) -> np.ndarray:
    return TWO_PI * np.arange(n) / n


def build_kernels(config: RingConfig) -> RingKernels:
    n = config.n_excitatory
    d = circular_distance_matrix(n)
    w_ee = np.exp(-((d / config.excitatory_kernel_width) ** 2))
    # far entries are below rounding next to the unit diagonal; dropping them
    # keeps the kernel banded and avoids subnormal products in the integrator
    w_ee[w_ee < KERNEL_CUTOFF] = 0.0
    # the inhibitory unit sits one unit away from every excitatory unit
    unit = math.exp(-1.0)
    w_ie = np.full(n, -config.inhibitory_gain * unit)
    w_ei = np.full(n, config.excitatory_to_inhibitory_gain * unit)
    return RingKernels(w_ee=w_ee, w_ie=w_ie, w_ei=w_ei, w_ii=-config.inhibitory_self_gain)


def gaussian_input(signals: Iterable[InputSignal], config: RingConfig) -> np.ndarray:
    alpha = preferred_angles(config.n_excitatory)
    x = np.zeros(config.n_excitatory)
    for s in signals:
        if not s.width >= SIGMA_MIN:
            raise ValueError(f"signal width {s.width} is below the floor {SIGMA_MIN}")
        diff = angular_difference(alpha, s.center)
        # normalisation is sqrt(2*pi*sigma), not sigma*sqrt(2*pi)
        x += s.amplitude / math.sqrt(TWO_PI * s.width) * np.exp(-0.5 * diff**2 / s.width**2)
    return x


@numba.njit(cache=True)
def _bandwidth(w_ee):
    """Largest circular distance carrying a nonzero excitatory weight, -1 if none."""
    n = w_ee.shape[0]
    band = -1
    for m in range(n):
        for j in range(n):
            if w_ee[m, j] != 0.0:
                d = abs(m - j)
                d = min(d, n - d)
                if d > band:
                    band = d
    return band


@numba.njit(cache=True)
def _integrate(v0, u, x, w_ee, w_ie, w_ei, w_ii, rate, h, tol, max_steps):
    """Synchronous Euler steps until max |dv| < tol; returns (v, u, steps, converged).

    Only weights within the kernel's nonzero band around the diagonal are visited.
    """
    n = v0.shape[0]
    band = _bandwidth(w_ee)
    v = v0.copy()
    acc = np.empty(n)
    full = 2 * band + 1 >= n
    steps = 0
    converged = False
    while steps < max_steps:
        drive_u = w_ii * u + h
        for j in range(n):
            acc[j] = x[j] + w_ie[j] * u + h
        for m in range(n):
            vm = v[m]
            drive_u += w_ei[m] * vm
            if vm != 0.0 and band >= 0:
                if full:
                    for j in range(n):
                        acc[j] += w_ee[m, j] * vm
                else:
                    lo = m - band
                    hi = m + band + 1
                    # the band wraps around at most one end of the ring
                    if lo < 0:
                        for j in range(lo + n, n):
                            acc[j] += w_ee[m, j] * vm
                        lo = 0
                    if hi > n:
                        for j in range(0, hi - n):
                            acc[j] += w_ee[m, j] * vm
                        hi = n
                    for j in range(lo, hi):
                        acc[j] += w_ee[m, j] * vm
        delta = 0.0
        for j in range(n):
            drive = acc[j] if acc[j] > 0.0 else 0.0
            step = rate * (drive - v[j])
            v[j] += step
            if abs(step) > delta:
                delta = abs(step)
        if drive_u < 0.0:
            drive_u = 0.0
        u = u + rate * (drive_u - u)
        steps += 1
        if not (np.isfinite(delta) and np.isfinite(u)):
            break
        if delta < tol:
            converged = True
            break
    return v, u, steps, converged


def _check_finite(state: RingState, x: np.ndarray, where: str):
    if not np.all(np.isfinite(state.v)) or not math.isfinite(state.u):
        raise FloatingPointError(
            f"{where}: non-finite ring state (max |v| = {np.nanmax(np.abs(state.v))}, u = {state.u})"
        )
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{where}: non-finite input at indices {np.flatnonzero(~np.isfinite(x))}")


def _prepare(state: RingState, x, kernels: RingKernels):
    v = np.ascontiguousarray(state.v, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    if v.shape != x.shape or v.shape[0] != kernels.w_ee.shape[0]:
        raise ValueError(f"shape mismatch: v {v.shape}, input {x.shape}, ring {kernels.w_ee.shape}")
    return v, x


def step_dynamics(state: RingState, x, kernels: RingKernels, config: RingConfig) -> RingState:
    """One synchronous explicit-Euler step of the excitatory and inhibitory rates."""
    v, x = _prepare(state, x, kernels)
    _check_finite(state, x, "step_dynamics")
    out, u, _, _ = _integrate(v, float(state.u), x, kernels.w_ee, kernels.w_ie, kernels.w_ei,
                              float(kernels.w_ii), float(config.dt_ratio),
                              float(config.threshold_h), -1.0, 1)
    new = RingState(out, float(u))
    _check_finite(new, x, "step_dynamics")
    return new


def settle(state: RingState, x, kernels: RingKernels, config: RingConfig) -> tuple[RingState, int, bool]:
    """Iterate ``step_dynamics`` until max |dv| < settle_tolerance or the step cap is hit."""
    v, x = _prepare(state, x, kernels)
    _check_finite(state, x, "settle")
    v_end, u_end, steps, converged = _integrate(
        v, float(state.u), x, kernels.w_ee, kernels.w_ie, kernels.w_ei, float(kernels.w_ii),
        float(config.dt_ratio), float(config.threshold_h), float(config.settle_tolerance),
        int(config.settle_max_steps),
    )
    final = RingState(v_end, float(u_end))
    _check_finite(final, x, f"settle (after {steps} steps)")
    return final, int(steps), bool(converged)


def decode_action(state: RingState, n_actions: int) -> int:
    v = np.asarray(state.v)
    n = v.shape[0]
    if not 1 <= n_actions <= n:
        raise ValueError(f"n_actions must be in [1, {n}], got {n_actions}")
    if not np.any(v > 0):
        raise NoWinnerError("ring has no positive activity to decode")
    peak = int(np.argmax(v))
    # nearest action with wraparound; floor(x + 0.5) keeps exact halves rounding up
    return int(math.floor(peak * n_actions / n + 0.5)) % n_actions


def encode_actions(q_values: Sequence[float], sigmas: Sequence[float], mapping,
                   amplitude_floor: float = AMPLITUDE_FLOOR) -> list[InputSignal]:
    """Turn action values into ring inputs.

    Amplitudes are shifted so the smallest equals ``amplitude_floor``; this keeps
    every input excitatory without changing the ordering of the values.
    """
    q = np.asarray(q_values, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if q.ndim != 1 or q.shape != s.shape:
        raise ValueError(f"q_values {q.shape} and sigmas {s.shape} must be equal-length vectors")
    if mapping.n_actions != q.shape[0]:
        raise ValueError(f"mapping covers {mapping.n_actions} actions, got {q.shape[0]} values")
    amplitudes = q - q.min() + amplitude_floor
    return [
        InputSignal(float(amplitudes[a]), float(mapping.angle(a)), max(float(s[a]), SIGMA_MIN))
        for a in range(q.shape[0])
    ]


def rotate(x: np.ndarray, k: int) -> np.ndarray:
    return np.roll(np.asarray(x), k)


class RingAttractor:
    """A configured ring bundled with its kernels, ready to pick actions."""

    def __init__(self, config: RingConfig | None = None):
        self.config = config or RingConfig()
        self.kernels = build_kernels(self.config)

    def settle_input(self, x) -> tuple[RingState, int, bool]:
        return settle(RingState.zeros(self.config.n_excitatory), x, self.kernels, self.config)

    def select(self, q_values, sigmas, mapping) -> int:
        signals = encode_actions(q_values, sigmas, mapping)
        state, _, _ = self.settle_input(gaussian_input(signals, self.config))
        return mapping.action_at(decode_action(state, mapping.n_actions))
