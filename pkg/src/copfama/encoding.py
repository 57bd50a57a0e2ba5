"""Port-major real encoding of snapshots and observation masks.

A snapshot (r, h, I) over K ports becomes a 2 x T real matrix with
T = 3K: row 0 holds real parts, row 1 imaginary parts, and each port
contributes three consecutive time indices (r, h, I). Flattened
coordinates use the fixed bijection i = d*T + t (0-based), D = 6K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Snapshot

VAR_R, VAR_H, VAR_I = 0, 1, 2
VAR_NAMES = ("r", "h", "I")


def t_index(var: int, port: int) -> int:
    """Time index of variable ``var`` at 0-based ``port``."""
    return 3 * port + var


@dataclass(frozen=True)
class IndexMap:
    """Bijection between flat coordinates i and (series d, time t) pairs,
    with per-time variable type and port annotations."""

    num_ports: int

    @property
    def num_times(self) -> int:
        return 3 * self.num_ports

    @property
    def num_coords(self) -> int:
        return 6 * self.num_ports

    def to_flat(self, d: int, t: int) -> int:
        if d not in (0, 1) or not 0 <= t < self.num_times:
            raise ValueError(f"index (d={d}, t={t}) outside 2x{self.num_times}")
        return d * self.num_times + t

    def to_pair(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.num_coords:
            raise ValueError(f"flat index {i} outside 0..{self.num_coords - 1}")
        return divmod(i, self.num_times)

    def var_of_time(self) -> np.ndarray:
        """Variable type (VAR_R/VAR_H/VAR_I) per time index."""
        return np.tile(np.array([VAR_R, VAR_H, VAR_I]), self.num_ports)

    def port_of_time(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_ports), 3)


@dataclass
class PortMajorSeries:
    """The real-valued 2 x 3K process X of one snapshot."""

    values: np.ndarray  # shape (2, 3K)
    num_ports: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (2, 3 * self.num_ports):
            raise ValueError(
                f"expected shape (2, {3 * self.num_ports}), got {self.values.shape}"
            )

    @property
    def index_map(self) -> IndexMap:
        return IndexMap(self.num_ports)

    def flat(self) -> np.ndarray:
        """Flattened coordinates in i = d*T + t order."""
        return self.values.reshape(-1)


def encode(snapshot: Snapshot) -> PortMajorSeries:
    """Arrange (r, h, I) into the port-major process."""
    k = snapshot.num_ports
    x = np.empty((2, 3 * k))
    for var, vec in ((VAR_R, snapshot.r), (VAR_H, snapshot.h), (VAR_I, snapshot.interference)):
        x[0, var::3] = vec.real
        x[1, var::3] = vec.imag
    return PortMajorSeries(x, k)


def decode(series: PortMajorSeries | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover complex (r, h, I) from a port-major process; exact inverse
    of :func:`encode`."""
    x = series.values if isinstance(series, PortMajorSeries) else np.asarray(series)
    if x.ndim != 2 or x.shape[0] != 2 or x.shape[1] % 3 != 0:
        raise ValueError(f"expected shape (2, 3K), got {x.shape}")
    out = []
    for var in (VAR_R, VAR_H, VAR_I):
        out.append(x[0, var::3] + 1j * x[1, var::3])
    return tuple(out)


@dataclass
class Mask:
    """Which flat coordinates the receiver observes in one symbol.

    Observing port k means observing all four (r_k, h_k) coordinates;
    interference coordinates are never observed.
    """

    observed_ports: np.ndarray  # 0-based, sorted
    num_ports: int

    def __post_init__(self):
        self.observed_ports = np.unique(np.asarray(self.observed_ports, dtype=int))
        if self.observed_ports.size and (
            self.observed_ports[0] < 0 or self.observed_ports[-1] >= self.num_ports
        ):
            raise ValueError("observed ports outside 0..K-1")

    @property
    def num_observed(self) -> int:
        return self.observed_ports.size

    def flat_indicator(self) -> np.ndarray:
        """Boolean vector over the D = 6K flat coordinates (True = observed)."""
        t = 3 * self.num_ports
        obs = np.zeros(2 * t, dtype=bool)
        for port in self.observed_ports:
            for var in (VAR_R, VAR_H):
                obs[t_index(var, port)] = True
                obs[t + t_index(var, port)] = True
        return obs

    def to_port_list(self) -> list[int]:
        """1-based observed ports, for experiment logs."""
        return [int(p) + 1 for p in self.observed_ports]


def equally_spaced_ports(num_ports: int, num_observed: int) -> np.ndarray:
    """The deterministic evaluation mask: ports round((m - 1/2) K / M)."""
    m = np.arange(1, num_observed + 1)
    # round half up (np.rint's half-to-even would duplicate ports at M = K)
    ports = np.floor((m - 0.5) * num_ports / num_observed + 0.5).astype(int)
    return np.clip(ports - 1, 0, num_ports - 1)


def default_training_range(num_ports: int) -> tuple[int, int]:
    """Observed-port range M ~ U[10, 60] at K = 200, scaled down
    proportionally for smaller apertures."""
    if num_ports >= 200:
        return 10, 60
    lo = int(np.ceil(num_ports / 20))
    hi = int(np.ceil(3 * num_ports / 10))
    return max(lo, 1), max(hi, 1)


def sample_mask(
    num_ports: int,
    m_min: int,
    m_max: int,
    placement: str,
    rng: np.random.Generator,
) -> Mask:
    """Draw a mask with M ~ U[m_min, m_max] observed ports placed either
    uniformly at random (training) or equally spaced (evaluation)."""
    if not 1 <= m_min <= m_max <= num_ports:
        raise ValueError(
            f"need 1 <= m_min <= m_max <= K, got ({m_min}, {m_max}, {num_ports})"
        )
    m = int(rng.integers(m_min, m_max + 1))
    if placement == "random":
        ports = rng.choice(num_ports, size=m, replace=False)
    elif placement == "equally-spaced":
        ports = equally_spaced_ports(num_ports, m)
    else:
        raise ValueError(f"unknown placement {placement!r}")
    return Mask(ports, num_ports)
