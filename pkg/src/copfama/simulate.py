"""Snapshot streams feeding model training and evaluation."""

from __future__ import annotations

import numpy as np

from .channel import FiniteScatterConfig, FiniteScattering, RichScattering, Snapshot, generate_snapshot
from .encoding import encode
from .geometry import FasGeometry


def make_channel_model(geometry: FasGeometry, params: dict):
    """Instantiate a channel family from its serialized parameters."""
    family = params.get("family")
    if family == "rich":
        return RichScattering(geometry, omega_h=params.get("omega_h", 1.0))
    if family == "finite":
        cfg = FiniteScatterConfig(
            k_rician=params.get("k_rician", 1.0),
            num_paths=params.get("num_paths", 4),
            path_gains=np.asarray(params["path_gains"]) if params.get("path_gains") else None,
        )
        return FiniteScattering(geometry, cfg)
    raise ValueError(f"unknown channel family {family!r}")


class SnapshotSimulator:
    """Draws i.i.d. multiuser snapshots and their port-major encodings."""

    def __init__(self, channel_model, num_users: int, signal_power: float, snr_db: float):
        self.channel_model = channel_model
        self.num_users = num_users
        self.signal_power = signal_power
        self.snr_db = snr_db

    @property
    def geometry(self) -> FasGeometry:
        return self.channel_model.geometry

    @property
    def num_ports(self) -> int:
        return self.geometry.num_ports

    @property
    def num_coords(self) -> int:
        return 6 * self.num_ports

    def snapshot(self, rng: np.random.Generator) -> Snapshot:
        return generate_snapshot(
            self.channel_model, self.num_users, self.signal_power, self.snr_db, rng
        )

    def batch_flat(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """(size, 6K) array of flattened port-major coordinates."""
        out = np.empty((size, self.num_coords))
        for n in range(size):
            out[n] = encode(self.snapshot(rng)).flat()
        return out

    def params_dict(self) -> dict:
        return {
            "channel": self.channel_model.params_dict(),
            "num_users": self.num_users,
            "signal_power": self.signal_power,
            "snr_db": self.snr_db,
        }
