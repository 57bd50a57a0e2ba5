"""Exact posterior for rich-scattering snapshots.

Conditioned on the desired QPSK symbol s_u, the flattened real vector of
(r, h, I) across ports is zero-mean Gaussian with a covariance assembled
from the spatial correlation matrix. Marginalizing the four equiprobable
QPSK hypotheses turns the posterior given any observed coordinate subset
into a 4-component Gaussian mixture, which this module evaluates in
closed form. Interferer symbols need no marginalization: for any
unit-modulus s, the product h * s of a circularly symmetric Gaussian
channel with s is itself circularly symmetric Gaussian, so the
interference field is exactly Gaussian given nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import RichScattering, qpsk_constellation
from .encoding import Mask
from .geometry import FasGeometry

EIG_CLIP_REL = 1e-10  # relative threshold for the observed-block pseudo-inverse


def flat_permutation(num_ports: int) -> np.ndarray:
    """perm[i] = index into the block basis [Re r, Im r, Re h, Im h, Re I, Im I]
    (each a K-vector) for flat coordinate i = d*T + t."""
    k = num_ports
    t_all = np.arange(3 * k)
    var = t_all % 3
    port = t_all // 3
    perm = np.empty(6 * k, dtype=int)
    for d in (0, 1):
        perm[d * 3 * k : (d + 1) * 3 * k] = (2 * var + d) * k + port
    return perm


def build_joint(
    corr: np.ndarray,
    omega_h: float,
    num_users: int,
    signal_power: float,
    noise_var: float,
    symbol: complex,
) -> np.ndarray:
    """D x D covariance of the flattened snapshot given s_u = ``symbol``."""
    corr = np.asarray(corr, dtype=float)
    k = corr.shape[0]
    eigval = np.linalg.eigvalsh(corr)
    if eigval.min() < -1e-8:
        raise ValueError(f"correlation matrix not PSD (min eigenvalue {eigval.min():.3e})")
    ch = 0.5 * omega_h * corr
    ci = 0.5 * (num_users - 1) * signal_power * omega_h * corr
    cn = 0.5 * noise_var * np.eye(k)
    a, b = symbol.real, symbol.imag

    blocks = np.zeros((6, 6, k, k))
    rr = signal_power * ch + ci + cn
    blocks[0, 0] = rr
    blocks[1, 1] = rr
    blocks[0, 2] = a * ch
    blocks[0, 3] = -b * ch
    blocks[1, 2] = b * ch
    blocks[1, 3] = a * ch
    blocks[0, 4] = ci
    blocks[1, 5] = ci
    blocks[2, 2] = ch
    blocks[3, 3] = ch
    blocks[4, 4] = ci
    blocks[5, 5] = ci
    full = np.block([[blocks[i, j] for j in range(6)] for i in range(6)])
    full = np.triu(full) + np.triu(full, 1).T

    perm = flat_permutation(k)
    return full[np.ix_(perm, perm)]


def _clipped_inverse(mat: np.ndarray):
    """Eigen-clipped pseudo-inverse; returns (inv, pseudo_logdet, clipped_any)."""
    eigval, eigvec = np.linalg.eigh(mat)
    thresh = EIG_CLIP_REL * max(eigval.max(), 0.0)
    keep = eigval > thresh
    inv = (eigvec[:, keep] / eigval[keep]) @ eigvec[:, keep].T
    logdet = float(np.sum(np.log(eigval[keep])))
    return inv, logdet, not bool(keep.all())


@dataclass
class MixturePosterior:
    """4-hypothesis Gaussian-mixture posterior over the missing coordinates."""

    weights: np.ndarray  # (4,)
    means: np.ndarray  # (4, n_missing)
    covariances: np.ndarray  # (4, n_missing, n_missing)
    missing: np.ndarray  # flat coordinate indices
    used_pseudo_inverse: bool

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.means


def mixture_posterior(
    joints: list[np.ndarray], observed: np.ndarray, values: np.ndarray
) -> MixturePosterior:
    """Condition each QPSK-hypothesis Gaussian on the observed coordinates
    and reweight by the observed-block likelihood (uniform prior)."""
    dim = joints[0].shape[0]
    observed = np.asarray(observed, dtype=int)
    values = np.asarray(values, dtype=float)
    missing = np.setdiff1d(np.arange(dim), observed)
    n_hyp = len(joints)
    logw = np.zeros(n_hyp)
    means = np.zeros((n_hyp, missing.size))
    covs = np.zeros((n_hyp, missing.size, missing.size))
    flagged = False
    for q, sigma in enumerate(joints):
        if observed.size == 0:
            covs[q] = sigma[np.ix_(missing, missing)]
            continue
        s_oo = sigma[np.ix_(observed, observed)]
        s_mo = sigma[np.ix_(missing, observed)]
        inv, logdet, clipped = _clipped_inverse(s_oo)
        flagged = flagged or clipped
        logw[q] = -0.5 * values @ inv @ values - 0.5 * logdet
        gain = s_mo @ inv
        means[q] = gain @ values
        covs[q] = sigma[np.ix_(missing, missing)] - gain @ s_mo.T
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    return MixturePosterior(w, means, covs, missing, flagged)


class _MaskConditioner:
    """Pre-factored conditioning for a fixed observed-coordinate set."""

    def __init__(self, joints: list[np.ndarray], observed: np.ndarray):
        self.observed = observed
        dim = joints[0].shape[0]
        self.missing = np.setdiff1d(np.arange(dim), observed)
        self.inv, self.logdet, self.gain, self.cov_factor = [], [], [], []
        self.used_pseudo_inverse = False
        for sigma in joints:
            if observed.size:
                s_oo = sigma[np.ix_(observed, observed)]
                s_mo = sigma[np.ix_(self.missing, observed)]
                inv, logdet, clipped = _clipped_inverse(s_oo)
                self.used_pseudo_inverse |= clipped
                gain = s_mo @ inv
                cov = sigma[np.ix_(self.missing, self.missing)] - gain @ s_mo.T
            else:
                inv, logdet, gain = None, 0.0, None
                cov = sigma[np.ix_(self.missing, self.missing)]
            eigval, eigvec = np.linalg.eigh(cov)
            factor = eigvec * np.sqrt(np.clip(eigval, 0.0, None))
            self.inv.append(inv)
            self.logdet.append(logdet)
            self.gain.append(gain)
            self.cov_factor.append(factor)

    def weights_and_means(self, values: np.ndarray):
        n_hyp = len(self.logdet)
        if self.observed.size == 0:
            return np.full(n_hyp, 1.0 / n_hyp), np.zeros((n_hyp, self.missing.size))
        logw = np.array(
            [
                -0.5 * values @ self.inv[q] @ values - 0.5 * self.logdet[q]
                for q in range(n_hyp)
            ]
        )
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        means = np.stack([self.gain[q] @ values for q in range(n_hyp)])
        return w, means


class OracleImputer:
    """Ground-truth posterior imputer for rich-scattering snapshots."""

    name = "oracle"

    def __init__(
        self,
        channel_model: RichScattering,
        num_users: int,
        signal_power: float,
        noise_var: float,
    ):
        if getattr(channel_model, "family", None) != "rich":
            raise ValueError(
                "the Gaussian oracle is only valid for the rich-scattering family"
            )
        self.geometry: FasGeometry = channel_model.geometry
        self.num_users = num_users
        self.signal_power = signal_power
        self.noise_var = noise_var
        self.symbols = qpsk_constellation(signal_power)
        self.joints = [
            build_joint(
                channel_model.correlation,
                channel_model.omega_h,
                num_users,
                signal_power,
                noise_var,
                complex(s),
            )
            for s in self.symbols
        ]
        self._cache: dict[tuple, _MaskConditioner] = {}

    def _conditioner(self, mask: Mask) -> _MaskConditioner:
        obs = np.nonzero(mask.flat_indicator())[0]
        key = tuple(obs.tolist())
        if key not in self._cache:
            self._cache[key] = _MaskConditioner(self.joints, obs)
        return self._cache[key]

    def posterior(self, series_flat: np.ndarray, mask: Mask) -> MixturePosterior:
        cond = self._conditioner(mask)
        values = np.asarray(series_flat, dtype=float)[cond.observed]
        w, means = cond.weights_and_means(values)
        covs = np.stack([f @ f.T for f in cond.cov_factor])
        return MixturePosterior(w, means, covs, cond.missing, cond.used_pseudo_inverse)

    def posterior_mean(self, series_flat: np.ndarray, mask: Mask) -> np.ndarray:
        """Mixture posterior mean, observed coordinates passed through."""
        cond = self._conditioner(mask)
        x = np.asarray(series_flat, dtype=float)
        w, means = cond.weights_and_means(x[cond.observed])
        out = x.copy()
        out[cond.missing] = w @ means
        return out

    def sample(
        self, series_flat: np.ndarray, mask: Mask, num_samples: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Posterior draws: pick a hypothesis, then its conditional Gaussian."""
        cond = self._conditioner(mask)
        x = np.asarray(series_flat, dtype=float)
        w, means = cond.weights_and_means(x[cond.observed])
        out = np.tile(x, (num_samples, 1))
        hyp = rng.choice(len(w), size=num_samples, p=w)
        for s in range(num_samples):
            q = hyp[s]
            z = rng.standard_normal(cond.missing.size)
            out[s, cond.missing] = means[q] + cond.cov_factor[q] @ z
        return out
