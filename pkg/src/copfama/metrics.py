"""Port selection and link-quality metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

SINR_CAP = 1e12


def normalized_sinr(h: np.ndarray, interference: np.ndarray) -> np.ndarray:
    """Per-port |h_k|^2 / |I_k|^2, capped when the interference power is
    below 1e-12 of the channel power."""
    ph = np.abs(h) ** 2
    pi = np.abs(interference) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(pi < 1e-12 * ph, SINR_CAP, ph / np.where(pi > 0, pi, 1.0))
    return np.minimum(gamma, SINR_CAP)


def select_port(profile: np.ndarray) -> int:
    """argmax of the SINR profile; ties broken by the lowest index."""
    if profile.size < 1:
        raise ValueError("empty SINR profile")
    return int(np.argmax(profile))


def predicted_sinr(
    h_samples: np.ndarray,
    i_samples: np.ndarray,
    observed_h: np.ndarray | None = None,
    observed_ports: np.ndarray | None = None,
) -> np.ndarray:
    """Posterior SINR profile averaged over imputation samples.

    ``h_samples``/``i_samples`` have shape (S, K). Ports with pilot
    observations use the observed channel against each imputed
    interference sample.
    """
    if h_samples.ndim != 2 or h_samples.shape != i_samples.shape:
        raise ValueError("need matching (S, K) sample arrays")
    h_eff = h_samples.copy()
    if observed_ports is not None and observed_ports.size:
        h_eff[:, observed_ports] = observed_h[observed_ports]
    gammas = np.stack(
        [normalized_sinr(h_eff[s], i_samples[s]) for s in range(h_samples.shape[0])]
    )
    return gammas.mean(axis=0)


def nmse(estimates: np.ndarray, truths: np.ndarray) -> float:
    """Power-normalized mean squared error over trials.

    Both arrays are (trials, n) real or complex; the expectation runs over
    trials and the norm over the field coordinates.
    """
    estimates = np.atleast_2d(estimates)
    truths = np.atleast_2d(truths)
    if estimates.shape != truths.shape:
        raise ValueError(f"shape mismatch {estimates.shape} vs {truths.shape}")
    power = np.mean(np.sum(np.abs(truths) ** 2, axis=1))
    if power == 0:
        raise ValueError("zero-power truth in NMSE")
    err = np.mean(np.sum(np.abs(estimates - truths) ** 2, axis=1))
    return float(err / power)


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def bsc_rate(gamma: float) -> float:
    """Per-symbol BSC information rate of Gray-mapped QPSK at SINR ``gamma``.

    Crossover p_b = Q(sqrt(gamma)) = erfc(sqrt(gamma/2))/2 per bit stream;
    rate = 2 * (1 - H_b(p_b)) bits/symbol.
    """
    if gamma < 0:
        raise ValueError(f"SINR must be >= 0, got {gamma}")
    p_b = 0.5 * erfc(math.sqrt(gamma / 2.0))
    return 2.0 * (1.0 - binary_entropy(p_b))
