import math

import numpy as np
import pytest

from copfama.metrics import (
    SINR_CAP,
    binary_entropy,
    bsc_rate,
    nmse,
    normalized_sinr,
    predicted_sinr,
    select_port,
)

from oracles import q_function


def test_sinr_unit_ratio():
    gamma = normalized_sinr(np.array([1 + 0j, 2j]), np.array([1j, 2.0]))
    assert np.allclose(gamma, [1.0, 1.0])


def test_sinr_direct_arithmetic():
    gamma = normalized_sinr(np.array([1.0, 2j]), np.array([2.0, 1.0]))
    assert np.allclose(gamma, [0.25, 4.0])


def test_sinr_cap_on_zero_interference():
    gamma = normalized_sinr(np.array([1.0, 1.0]), np.array([0.0, 1e-12]))
    assert gamma[0] == SINR_CAP
    assert gamma[1] == SINR_CAP


def test_select_port_examples():
    assert select_port(np.array([1.0, 3.0, 2.0])) == 1
    assert select_port(np.array([2.0, 2.0, 2.0])) == 0
    with pytest.raises(ValueError):
        select_port(np.array([]))


def test_select_port_scale_invariant():
    rng = np.random.default_rng(0)
    for _ in range(20):
        gamma = rng.uniform(0.1, 5.0, 8)
        assert select_port(gamma) == select_port(7.3 * gamma)


def test_predicted_sinr_exact_when_truth():
    rng = np.random.default_rng(1)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    i = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    gamma = predicted_sinr(h[None, :], i[None, :])
    assert np.allclose(gamma, normalized_sinr(h, i))


def test_predicted_sinr_uses_observed_channel():
    h_samples = np.zeros((2, 3), dtype=complex)
    i_samples = np.ones((2, 3), dtype=complex)
    observed_h = np.array([2.0, 0.0, 0.0], dtype=complex)
    gamma = predicted_sinr(h_samples, i_samples, observed_h, np.array([0]))
    assert gamma[0] == pytest.approx(4.0)
    assert gamma[1] == pytest.approx(0.0)


def test_predicted_sinr_zero_interference_ties():
    h = np.ones((1, 3), dtype=complex)
    i = np.zeros((1, 3), dtype=complex)
    gamma = predicted_sinr(h, i)
    assert np.all(gamma == SINR_CAP)
    assert select_port(gamma) == 0


def test_predicted_sinr_shape_validation():
    with pytest.raises(ValueError):
        predicted_sinr(np.zeros((2, 3)), np.zeros((3, 3)))


def test_nmse_basics():
    rng = np.random.default_rng(2)
    truth = rng.standard_normal((10, 6))
    assert nmse(truth, truth) == 0.0
    assert nmse(np.zeros_like(truth), truth) == pytest.approx(1.0)


def test_nmse_constructed_level():
    rng = np.random.default_rng(3)
    truth = rng.standard_normal((20, 8))
    delta = rng.standard_normal((20, 8))
    scale = 0.1 * np.linalg.norm(truth, axis=1, keepdims=True) / np.linalg.norm(delta, axis=1, keepdims=True)
    est = truth + scale * delta
    # per-trial error power is 1% of that trial's signal power; the ratio
    # of means is not exactly 0.01 unless powers are equal, so normalize
    uniform = truth / np.linalg.norm(truth, axis=1, keepdims=True)
    est_u = uniform + 0.1 * (delta / np.linalg.norm(delta, axis=1, keepdims=True))
    assert nmse(est_u, uniform) == pytest.approx(0.01, abs=1e-12)
    assert nmse(est, truth) == pytest.approx(0.01, rel=0.2)


def test_nmse_zero_power_rejected():
    with pytest.raises(ValueError):
        nmse(np.ones((2, 3)), np.zeros((2, 3)))


def test_nmse_phase_rotation_invariant():
    rng = np.random.default_rng(4)
    truth = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
    est = truth + 0.1 * (rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4)))
    rot = np.exp(1j * 0.7)
    assert nmse(est * rot, truth * rot) == pytest.approx(nmse(est, truth), abs=1e-12)


def test_binary_entropy_endpoints():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0)


def test_bsc_rate_zero_sinr():
    assert bsc_rate(0.0) == pytest.approx(0.0, abs=1e-12)


def test_bsc_rate_limits_and_monotone():
    assert bsc_rate(1e12) == pytest.approx(2.0, abs=1e-9)
    grid = np.linspace(0.0, 30.0, 200)
    rates = [bsc_rate(g) for g in grid]
    assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))
    assert all(0.0 <= r <= 2.0 for r in rates)
    with pytest.raises(ValueError):
        bsc_rate(-0.1)


def test_bsc_rate_at_four_vs_series_oracle():
    p_b = q_function(2.0)
    assert p_b == pytest.approx(0.0227501, abs=1e-6)
    expected = 2.0 * (1.0 + p_b * math.log2(p_b) + (1 - p_b) * math.log2(1 - p_b))
    assert bsc_rate(4.0) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(1.687, abs=2e-3)
