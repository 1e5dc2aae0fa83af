import math
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ringrl.envs import ActionMapping
from ringrl.errors import NoWinnerError
from ringrl.ring import (DEFAULT_SIGMA, InputSignal, RingAttractor, RingConfig, RingState,
                         angular_difference, build_kernels, circular_distance, decode_action,
                         encode_actions, gaussian_input, rotate, settle, step_dynamics)

CFG = RingConfig()
KERNELS = build_kernels(CFG)


def dense_step(v, u, x, cfg):
    """Reference Euler step built straight from the update rule with full dense kernels."""
    n = len(v)
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :])
    d = np.minimum(d, n - d)
    w_ee = np.exp(-((d / cfg.excitatory_kernel_width) ** 2))
    w_ie = -cfg.inhibitory_gain * math.exp(-1)
    w_ei = cfg.excitatory_to_inhibitory_gain * math.exp(-1)
    f = lambda z: np.maximum(0.0, z + cfg.threshold_h)
    rate = cfg.dt_ratio
    v_new = v + rate * (f(w_ee.T @ v + x + w_ie * u) - v)
    u_new = u + rate * (f(-cfg.inhibitory_self_gain * u + w_ei * v.sum()) - u)
    return v_new, u_new


def decode_oracle(peak, n, a):
    """Nearest action with wraparound, exact halves rounding up."""
    r = Fraction(peak * a, n)
    return int(math.floor(r + Fraction(1, 2))) % a


# distances and angles ---------------------------------------------------------

@pytest.mark.parametrize("m,n,expected", [(0, 7, 1), (3, 3, 0), (0, 4, 4)])
def test_circular_distance_examples(m, n, expected):
    assert circular_distance(m, n, 8) == expected


@pytest.mark.parametrize("m,n", [(-1, 0), (0, 8), (8, 8)])
def test_circular_distance_out_of_range(m, n):
    with pytest.raises(ValueError):
        circular_distance(m, n, 8)


@settings(max_examples=100)
@given(size=st.integers(1, 200), data=st.data())
def test_circular_distance_symmetric_bounded(size, data):
    m = data.draw(st.integers(0, size - 1))
    n = data.draw(st.integers(0, size - 1))
    d = circular_distance(m, n, size)
    assert d == circular_distance(n, m, size)
    assert 0 <= d <= size // 2


def test_angular_difference_examples():
    assert angular_difference(0.0, 2 * math.pi) == pytest.approx(0.0, abs=1e-15)
    assert abs(angular_difference(0.1, 2 * math.pi - 0.1)) == pytest.approx(0.2)
    assert angular_difference(math.pi / 2, 0.0) == pytest.approx(math.pi / 2)


@settings(max_examples=200)
@given(a=st.floats(-50, 50), b=st.floats(-50, 50))
def test_angular_difference_range_and_periodicity(a, b):
    d = float(angular_difference(a, b))
    assert -math.pi <= d <= math.pi
    assert math.cos(d) == pytest.approx(math.cos(a - b), abs=1e-9)
    assert math.sin(d) == pytest.approx(math.sin(a - b), abs=1e-9)


# kernels and input ------------------------------------------------------------

def test_kernel_values():
    k = build_kernels(RingConfig(inhibitory_gain=1.0))
    np.testing.assert_array_equal(np.diag(k.w_ee), 1.0)
    assert k.w_ee[0, 1] == pytest.approx(0.367879, abs=1e-6)
    np.testing.assert_allclose(k.w_ie, -0.367879, atol=1e-6)
    assert np.all(k.w_ei >= 0) and k.w_ii < 0


def test_kernel_matches_formula_and_is_circulant():
    for width in (0.5, 1.0, 3.0):
        k = build_kernels(RingConfig(excitatory_kernel_width=width)).w_ee
        n = k.shape[0]
        d = np.array([[circular_distance(i, j, n) for j in range(n)] for i in range(n)])
        np.testing.assert_allclose(k, np.exp(-((d / width) ** 2)), rtol=0, atol=1e-17)
        np.testing.assert_array_equal(k, k.T)
        for s in (1, 5, 31):
            np.testing.assert_array_equal(np.roll(np.roll(k, s, 0), s, 1), k)


def test_gaussian_input_examples():
    np.testing.assert_array_equal(gaussian_input([], CFG), np.zeros(64))
    x = gaussian_input([InputSignal(1.0, 0.0, math.pi / 6)], CFG)
    assert x[0] == pytest.approx(0.55133, abs=1e-5)
    assert x[0] == pytest.approx(1 / math.sqrt(2 * math.pi * (math.pi / 6)), rel=1e-14)


def test_gaussian_input_reflection_symmetry():
    mu = 0.7
    x = gaussian_input([InputSignal(1.3, mu, 0.4), InputSignal(1.3, 2 * math.pi - mu, 0.4)], CFG)
    reflected = x[(-np.arange(64)) % 64]
    np.testing.assert_allclose(x, reflected, atol=1e-14)


def test_input_width_floor():
    with pytest.raises(ValueError):
        InputSignal(1.0, 0.0, 0.01)


# dynamics ---------------------------------------------------------------------

def test_zero_is_fixed_point():
    s = step_dynamics(RingState.zeros(64), np.zeros(64), KERNELS, CFG)
    np.testing.assert_array_equal(s.v, 0)
    assert s.u == 0
    state, steps, converged = settle(RingState.zeros(64), np.zeros(64), KERNELS, CFG)
    assert steps == 1 and converged
    np.testing.assert_array_equal(state.v, 0)


def test_full_step_replaces_with_activation():
    cfg = RingConfig(dt_ratio=1.0)
    x = np.random.default_rng(0).normal(size=64)
    s = step_dynamics(RingState.zeros(64), x, build_kernels(cfg), cfg)
    np.testing.assert_array_equal(s.v, np.maximum(0.0, x))


def test_step_matches_dense_reference():
    rng = np.random.default_rng(1)
    for cfg in (CFG, RingConfig(threshold_h=0.05, dt_ratio=0.3, excitatory_kernel_width=2.0)):
        k = build_kernels(cfg)
        for _ in range(10):
            v, u, x = rng.uniform(0, 2, 64), float(rng.uniform(0, 2)), rng.normal(size=64)
            s = step_dynamics(RingState(v, u), x, k, cfg)
            v_ref, u_ref = dense_step(v, u, x, cfg)
            np.testing.assert_allclose(s.v, v_ref, atol=1e-12)
            assert s.u == pytest.approx(u_ref, abs=1e-12)


def test_nonnegative_after_steps():
    rng = np.random.default_rng(2)
    s = RingState.zeros(64)
    for _ in range(200):
        s = step_dynamics(s, rng.normal(size=64), KERNELS, CFG)
        assert np.all(s.v >= 0) and s.u >= 0


def test_nonfinite_rejected():
    x = np.zeros(64)
    x[3] = np.nan
    with pytest.raises(FloatingPointError):
        step_dynamics(RingState.zeros(64), x, KERNELS, CFG)
    with pytest.raises(FloatingPointError):
        settle(RingState(np.full(64, np.inf), 0.0), np.zeros(64), KERNELS, CFG)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        step_dynamics(RingState.zeros(32), np.zeros(64), KERNELS, CFG)


def test_settle_equals_repeated_steps_bitwise():
    cfg = RingConfig(settle_max_steps=300)
    x = np.random.default_rng(3).uniform(0, 1, 64)
    final, steps, _ = settle(RingState.zeros(64), x, KERNELS, cfg)
    s = RingState.zeros(64)
    for _ in range(steps):
        s = step_dynamics(s, x, KERNELS, cfg)
    np.testing.assert_array_equal(final.v, s.v)
    assert final.u == s.u


def test_single_gaussian_settles_monotonically():
    x = gaussian_input([InputSignal(1.0, 2 * math.pi * 5 / 64, DEFAULT_SIGMA)], CFG)
    s = RingState.zeros(64)
    deltas = []
    for _ in range(2000):
        nxt = step_dynamics(s, x, KERNELS, CFG)
        deltas.append(np.max(np.abs(nxt.v - s.v)))
        s = nxt
    deltas = np.array(deltas)
    tail = deltas[400:]
    assert np.all(np.diff(tail) <= 0)
    assert tail[-1] < 1e-6


@pytest.mark.parametrize("k", range(0, 64, 3))
def test_single_gaussian_peaks_at_its_neuron(k):
    x = gaussian_input([InputSignal(2.0, 2 * math.pi * k / 64, DEFAULT_SIGMA)], CFG)
    state, _, converged = settle(RingState.zeros(64), x, KERNELS, CFG)
    assert converged
    assert int(np.argmax(state.v)) == k


def test_rotation_equivariance_random_inputs():
    rng = np.random.default_rng(4)
    for _ in range(3):
        x = rng.uniform(0, 1, 64)
        base, _, _ = settle(RingState.zeros(64), x, KERNELS, CFG)
        for k in (1, 8, 17, 40):
            rot, _, _ = settle(RingState.zeros(64), rotate(x, k), KERNELS, CFG)
            assert np.max(np.abs(rot.v - rotate(base.v, k))) < CFG.settle_tolerance
            if k % 8 == 0:
                assert decode_action(rot, 8) == (decode_action(base, 8) + k // 8) % 8


def test_settle_deterministic():
    x = np.random.default_rng(5).uniform(0, 1, 64)
    a = settle(RingState.zeros(64), x, KERNELS, CFG)
    b = settle(RingState.zeros(64), x, KERNELS, CFG)
    np.testing.assert_array_equal(a[0].v, b[0].v)
    assert a[1:] == b[1:]


# decode and encode --------------------------------------------------------------

def _peaked(n, peak):
    v = np.zeros(n)
    v[peak] = 1.0
    return RingState(v, 0.0)


@pytest.mark.parametrize("peak,expected", [(24, 3), (0, 0), (63, 0)])
def test_decode_examples(peak, expected):
    assert decode_action(_peaked(64, peak), 8) == expected


@pytest.mark.parametrize("n,a", [(64, 8), (32, 4), (16, 16), (10, 4), (7, 3)])
def test_decode_exhaustive(n, a):
    for peak in range(n):
        assert decode_action(_peaked(n, peak), a) == decode_oracle(peak, n, a)


def test_decode_tie_lowest_index():
    v = np.zeros(64)
    v[[20, 40]] = 1.0
    assert decode_action(RingState(v, 0.0), 8) == decode_oracle(20, 64, 8)


def test_decode_errors():
    with pytest.raises(NoWinnerError):
        decode_action(RingState.zeros(64), 8)
    with pytest.raises(ValueError):
        decode_action(_peaked(8, 0), 9)


def test_encode_examples():
    m = ActionMapping(3)
    sig = encode_actions([1.0, 3.0, 2.0], [DEFAULT_SIGMA] * 3, m)
    np.testing.assert_allclose([s.amplitude for s in sig], [0.1, 2.1, 1.1], atol=1e-12)
    assert [s.width for s in sig] == [DEFAULT_SIGMA] * 3
    flat = encode_actions([0.4] * 3, [0.0] * 3, m)
    assert all(s.amplitude == 0.1 for s in flat)
    assert all(s.width == 0.05 for s in flat)


def test_encode_length_mismatch():
    with pytest.raises(ValueError):
        encode_actions([1.0, 2.0], [0.5], ActionMapping(2))
    with pytest.raises(ValueError):
        encode_actions([1.0, 2.0], [0.5, 0.5], ActionMapping(3))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-100, 100))
def test_encode_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=8)
    a = encode_actions(q, np.full(8, 0.4), ActionMapping(8))
    b = encode_actions(q + shift, np.full(8, 0.4), ActionMapping(8))
    np.testing.assert_allclose([s.amplitude for s in a], [s.amplitude for s in b], atol=1e-9)
    assert int(np.argmax([s.amplitude for s in a])) == int(np.argmax(q))


def test_round_trip_all_actions():
    ring = RingAttractor()
    mapping = ActionMapping(8)
    start = time.perf_counter()
    for a in range(8):
        assert ring.select(np.eye(8)[a], [DEFAULT_SIGMA] * 8, mapping) == a
    assert time.perf_counter() - start < 5.0


def test_round_trip_through_permuted_mapping():
    ring = RingAttractor()
    mapping = ActionMapping(8, permutation=(3, 7, 0, 5, 1, 6, 2, 4))
    for a in range(8):
        assert ring.select(np.eye(8)[a], [DEFAULT_SIGMA] * 8, mapping) == a


# config -----------------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(n_excitatory=1), dict(dt_ratio=0.0), dict(dt_ratio=1.5),
                                 dict(inhibitory_gain=0.0), dict(settle_tolerance=-1.0),
                                 dict(settle_max_steps=0), dict(threshold_h=math.inf)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        RingConfig(**bad)


def test_config_round_trip_and_unknown_keys():
    cfg = RingConfig(inhibitory_gain=3.0)
    assert RingConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        RingConfig.from_dict({"gain": 1.0})
