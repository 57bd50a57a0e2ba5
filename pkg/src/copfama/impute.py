"""Imputer front-ends with a shared interface for evaluation.

Every imputer maps (flattened port-major series, mask) to a posterior
mean over all coordinates and to posterior sample draws; the evaluation
harness is agnostic to which one it drives.
"""

from __future__ import annotations

import numpy as np

from .copula import AttentionalCopula, posterior_mean, sample_posterior
from .encoding import Mask
from .marginal import MarginalFlowBank
from .oracle import OracleImputer


class LearnedImputer:
    """Two-stage marginal-flow + attentional-copula model."""

    name = "model"

    def __init__(self, bank: MarginalFlowBank, model: AttentionalCopula, quad_nodes: int = 64):
        if bank.geometry.num_ports != model.geometry.num_ports:
            raise ValueError("stage-1 bank and copula disagree on geometry")
        self.bank = bank
        self.model = model
        self.quad_nodes = quad_nodes
        self.geometry = model.geometry

    def posterior_mean(self, series_flat: np.ndarray, mask: Mask) -> np.ndarray:
        return posterior_mean(series_flat, mask, self.bank, self.model, self.quad_nodes)

    def sample(self, series_flat, mask, num_samples, rng) -> np.ndarray:
        return sample_posterior(series_flat, mask, self.bank, self.model, num_samples, rng)


class ZeroImputer:
    """Baseline that predicts zero for every unobserved coordinate."""

    name = "zero"

    def __init__(self, geometry):
        self.geometry = geometry

    def posterior_mean(self, series_flat: np.ndarray, mask: Mask) -> np.ndarray:
        out = np.zeros_like(np.asarray(series_flat, dtype=float))
        obs = mask.flat_indicator()
        out[obs] = np.asarray(series_flat)[obs]
        return out

    def sample(self, series_flat, mask, num_samples, rng) -> np.ndarray:
        return np.tile(self.posterior_mean(series_flat, mask), (num_samples, 1))


def oracle_imputer_for(simulator) -> OracleImputer:
    """Build the exact Gaussian oracle matching a simulator's configuration."""
    from .channel import noise_variance

    model = simulator.channel_model
    sigma2 = noise_variance(model.reference_gain, simulator.signal_power, simulator.snr_db)
    return OracleImputer(model, simulator.num_users, simulator.signal_power, sigma2)
