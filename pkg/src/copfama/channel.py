"""Multiuser FAS channel simulation.

Implements the two small-scale fading families (rich-scattering Gaussian
with Jakes-type spatial correlation, and a Rician finite-scattering model
with a low-rank covariance), QPSK symbols, and full per-symbol snapshots
r = h*s_u + I + eta across all ports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0 as bessel_j0

from .geometry import FasGeometry


@dataclass
class Snapshot:
    """One symbol interval at the receiver: complex K-vectors and the
    symbols/noise that generated them."""

    r: np.ndarray
    h: np.ndarray
    interference: np.ndarray
    noise: np.ndarray
    symbol: complex
    interferer_symbols: np.ndarray
    signal_power: float
    noise_var: float
    num_users: int

    @property
    def num_ports(self) -> int:
        return self.r.shape[0]

    def residual(self) -> np.ndarray:
        """r - h*s_u - I - eta; zero up to float rounding by construction."""
        return self.r - self.h * self.symbol - self.interference - self.noise


def correlation_rich(geometry: FasGeometry) -> np.ndarray:
    """Spatial correlation matrix of the rich-scattering field.

    1D apertures use J0(2*pi*d), 2D apertures the spherical Bessel
    j0(2*pi*d) = sin(2*pi*d)/(2*pi*d), with d the port distance in
    wavelengths.
    """
    pos = geometry.positions
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    if geometry.dimension == 1:
        return bessel_j0(2.0 * np.pi * dist)
    return np.sinc(2.0 * dist)  # np.sinc(x) = sin(pi x)/(pi x)


def psd_factor(corr: np.ndarray, clip_report: dict | None = None) -> np.ndarray:
    """Factor a symmetric correlation matrix as L @ L.T after clipping
    negative eigenvalues to zero.

    The Jakes correlation matrices are severely ill-conditioned and can
    carry tiny negative eigenvalues from rounding; clipping preserves the
    unit diagonal better than jitter. The relative Frobenius mass removed
    is reported through ``clip_report`` when given.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.shape[0] != corr.shape[1] or not np.allclose(corr, corr.T, atol=1e-10):
        raise ValueError(f"correlation matrix must be symmetric, got shape {corr.shape}")
    eigval, eigvec = np.linalg.eigh(corr)
    clipped = np.clip(eigval, 0.0, None)
    if clip_report is not None:
        recomposed = (eigvec * clipped) @ eigvec.T
        denom = np.linalg.norm(corr)
        clip_report["num_clipped"] = int(np.sum(eigval < 0))
        clip_report["rel_frobenius_change"] = (
            float(np.linalg.norm(recomposed - corr) / denom) if denom > 0 else 0.0
        )
    return eigvec * np.sqrt(clipped)


def sample_complex_standard(rng: np.random.Generator, size: int) -> np.ndarray:
    """CN(0, 1) vector: independent real/imaginary parts of variance 1/2."""
    z = rng.standard_normal((size, 2))
    return (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)


def sample_rich_channel(
    factor: np.ndarray, omega_h: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw h = sqrt(omega_h) * L z with z ~ CN(0, I)."""
    z = sample_complex_standard(rng, factor.shape[1])
    return math.sqrt(omega_h) * (factor @ z)


def steering_vector(geometry: FasGeometry, theta: float, phi: float) -> np.ndarray:
    """Array response across ports for azimuth/elevation AoA (theta, phi).

    The excess propagation distance is measured from the reference port
    (the first one), so the leading entry is always 1.
    """
    pos = geometry.positions - geometry.positions[0]
    if geometry.dimension == 1:
        excess = pos[:, 0] * math.sin(theta) * math.cos(phi)
    else:
        excess = pos[:, 0] * math.sin(theta) * math.cos(phi) + pos[:, 1] * math.cos(theta)
    return np.exp(-2j * np.pi * excess)


@dataclass
class FiniteScatterConfig:
    """Rician finite-scattering parameters.

    When ``angles`` / ``los_phase`` are None, fresh ones are drawn per
    channel realization (theta ~ U[0, 2pi), phi ~ U[0, pi), delta ~
    U[0, 2pi)); fixing them pins the covariance for closed-form checks.
    ``angles`` has shape (N_p + 1, 2) with the line-of-sight path first.
    """

    k_rician: float = 1.0
    num_paths: int = 4
    path_gains: np.ndarray | None = None
    angles: np.ndarray | None = None
    los_phase: float | None = None

    def __post_init__(self):
        if self.k_rician < 0:
            raise ValueError(f"Rician factor must be >= 0, got {self.k_rician}")
        if self.num_paths < 1:
            raise ValueError(f"need at least one scattered path, got {self.num_paths}")
        if self.path_gains is None:
            self.path_gains = np.ones(self.num_paths)
        self.path_gains = np.asarray(self.path_gains, dtype=float)
        if self.path_gains.shape != (self.num_paths,) or np.any(self.path_gains <= 0):
            raise ValueError("path_gains must be positive, one per scattered path")
        if self.angles is not None:
            self.angles = np.asarray(self.angles, dtype=float)
            if self.angles.shape != (self.num_paths + 1, 2):
                raise ValueError(
                    f"angles must have shape ({self.num_paths + 1}, 2), got {self.angles.shape}"
                )

    def draw_angles(self, rng: np.random.Generator) -> np.ndarray:
        if self.angles is not None:
            return self.angles
        theta = rng.uniform(0.0, 2.0 * np.pi, self.num_paths + 1)
        phi = rng.uniform(0.0, np.pi, self.num_paths + 1)
        return np.stack([theta, phi], axis=1)

    def draw_los_phase(self, rng: np.random.Generator) -> float:
        if self.los_phase is not None:
            return self.los_phase
        return float(rng.uniform(0.0, 2.0 * np.pi))


def sample_finite_channel(
    geometry: FasGeometry, cfg: FiniteScatterConfig, rng: np.random.Generator
) -> np.ndarray:
    """Draw one Rician finite-scattering channel realization."""
    angles = cfg.draw_angles(rng)
    delta = cfg.draw_los_phase(rng)
    kr = cfg.k_rician
    los = steering_vector(geometry, *angles[0])
    h = math.sqrt(kr / (kr + 1.0)) * np.exp(1j * delta) * los
    gains = np.sqrt(cfg.path_gains) * sample_complex_standard(rng, cfg.num_paths)
    diffuse = np.zeros(geometry.num_ports, dtype=complex)
    for ell in range(cfg.num_paths):
        diffuse += gains[ell] * steering_vector(geometry, *angles[ell + 1])
    return h + math.sqrt(1.0 / (kr + 1.0)) / math.sqrt(cfg.num_paths) * diffuse


def finite_covariance(geometry: FasGeometry, cfg: FiniteScatterConfig) -> np.ndarray:
    """Closed-form E[h h^H] of the finite-scattering model (fixed angles).

    Rank is at most 1 + N_p: one line-of-sight dyad plus one per path.
    """
    if cfg.angles is None:
        raise ValueError("closed-form covariance requires fixed angles")
    kr = cfg.k_rician
    a0 = steering_vector(geometry, *cfg.angles[0])
    cov = (kr / (kr + 1.0)) * np.outer(a0, a0.conj())
    for ell in range(cfg.num_paths):
        a = steering_vector(geometry, *cfg.angles[ell + 1])
        cov += (
            cfg.path_gains[ell] / ((kr + 1.0) * cfg.num_paths) * np.outer(a, a.conj())
        )
    return cov


# Gray-mapped QPSK: adjacent constellation points differ in exactly one bit.
_QPSK_POINTS = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2.0)
_QPSK_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]])


def qpsk_symbol(signal_power: float, rng: np.random.Generator) -> complex:
    """Uniform Gray-mapped QPSK symbol with |s|^2 = signal_power exactly."""
    if signal_power <= 0:
        raise ValueError(f"signal power must be positive, got {signal_power}")
    return complex(math.sqrt(signal_power) * _QPSK_POINTS[rng.integers(4)])


def qpsk_constellation(signal_power: float) -> np.ndarray:
    return math.sqrt(signal_power) * _QPSK_POINTS


def qpsk_bits(index: int) -> tuple[int, int]:
    """Gray bit pair carried by constellation point ``index``."""
    return tuple(_QPSK_BITS[index])


class RichScattering:
    """Rich-scattering Gaussian channel family over a fixed geometry."""

    family = "rich"

    def __init__(self, geometry: FasGeometry, omega_h: float = 1.0):
        if omega_h < 0:
            raise ValueError(f"large-scale gain must be >= 0, got {omega_h}")
        self.geometry = geometry
        self.omega_h = omega_h
        self.correlation = correlation_rich(geometry)
        self.clip_report: dict = {}
        self.factor = psd_factor(self.correlation, self.clip_report)

    @property
    def reference_gain(self) -> float:
        """Mean per-port channel power, used in the SNR definition."""
        return self.omega_h

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_rich_channel(self.factor, self.omega_h, rng)

    def params_dict(self) -> dict:
        return {"family": self.family, "omega_h": self.omega_h}


class FiniteScattering:
    """Rician finite-scattering channel family over a fixed geometry."""

    family = "finite"

    def __init__(self, geometry: FasGeometry, cfg: FiniteScatterConfig | None = None):
        self.geometry = geometry
        self.cfg = cfg if cfg is not None else FiniteScatterConfig()

    @property
    def reference_gain(self) -> float:
        # E|h_k|^2 is angle-independent: unit-modulus steering entries.
        kr = self.cfg.k_rician
        return kr / (kr + 1.0) + float(np.mean(self.cfg.path_gains)) / (kr + 1.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_finite_channel(self.geometry, self.cfg, rng)

    def params_dict(self) -> dict:
        return {
            "family": self.family,
            "k_rician": self.cfg.k_rician,
            "num_paths": self.cfg.num_paths,
            "path_gains": self.cfg.path_gains.tolist(),
        }


def noise_variance(reference_gain: float, signal_power: float, snr_db: float) -> float:
    """Per-port noise variance for a given SNR in dB.

    SNR is defined as desired per-port power (reference_gain * P_s) over
    the noise variance; interference power is not included.
    """
    return reference_gain * signal_power / (10.0 ** (snr_db / 10.0))


def generate_snapshot(
    model,
    num_users: int,
    signal_power: float,
    snr_db: float,
    rng: np.random.Generator,
) -> Snapshot:
    """Draw one full multiuser snapshot from a channel family.

    Desired and interfering links always come from the same model family.
    """
    if num_users < 1:
        raise ValueError(f"need at least one user, got {num_users}")
    k = model.geometry.num_ports
    h = model.sample(rng)
    s_u = qpsk_symbol(signal_power, rng)
    interference = np.zeros(k, dtype=complex)
    s_others = np.empty(num_users - 1, dtype=complex)
    for i in range(num_users - 1):
        s_others[i] = qpsk_symbol(signal_power, rng)
        interference += model.sample(rng) * s_others[i]
    sigma2 = noise_variance(model.reference_gain, signal_power, snr_db)
    noise = math.sqrt(sigma2) * sample_complex_standard(rng, k)
    r = h * s_u + interference + noise
    return Snapshot(
        r=r,
        h=h,
        interference=interference,
        noise=noise,
        symbol=s_u,
        interferer_symbols=s_others,
        signal_power=signal_power,
        noise_var=sigma2,
        num_users=num_users,
    )
