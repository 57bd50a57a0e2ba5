"""Run configuration: YAML schema, strict validation, and profiles.

Defaults follow the reference simulation/model parameter set (200-port
1D aperture, 600 + 300 training epochs). The ``desk`` profile is a
scaled-down configuration that trains in minutes on a workstation.
Unknown keys anywhere in a config file are errors, so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from .copula import AttentionalCopula, CopulaHyperParams
from .encoding import default_training_range, sample_mask
from .geometry import FasGeometry, build_geometry
from .marginal import MarginalFlowBank
from .simulate import SnapshotSimulator, make_channel_model


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "geometry": {
        "dimension": 1,
        "num_ports": 200,
        "grid_shape": None,  # [K_x, K_y] for 2D
        "aperture": 10.0,  # wavelengths; [W_x, W_y] for 2D
    },
    "channel": {
        "family": "rich",
        "omega_h": 1.0,
        "k_rician": 1.0,
        "num_paths": 4,
        "path_gains": None,
    },
    "signal": {
        "num_users": 50,
        "signal_power": 1.0,
        "snr_db": 10.0,
    },
    "mask": {
        "train_placement": "random",
        "eval_placement": "equally-spaced",
        "train_m_min": None,  # null -> scaled [10, 60] range
        "train_m_max": None,
    },
    "model": {
        "stage1": {
            "flow_layers": 4,
            "flow_hidden": 64,
            "mlp_layers": 4,
            "mlp_dim": 64,
            "embed_dim": 16,
        },
        "stage2": {
            "embed_dim": 16,
            "attn_dim": 128,
            "num_heads": 8,
            "ff_dim": 256,
            "encoder_layers": 6,
            "decoder_layers": 3,
            "input_mlp_layers": 3,
            "head_mlp_layers": 4,
            "head_mlp_dim": 64,
            "head_flow_layers": 2,
            "head_flow_hidden": 16,
            "target_noise_scale": 0.01,
        },
    },
    "training": {
        "stage1": {"epochs": 600, "batches_per_epoch": 1000, "batch_size": 16, "lr": 1e-5},
        "stage2": {"epochs": 300, "batches_per_epoch": 1000, "batch_size": 8, "lr": 5e-6},
    },
    "evaluate": {"trials": 100, "num_samples": 16, "quadrature_nodes": 64},
    "seed": 0,
}

PROFILES: dict[str, dict] = {
    "table1": {},
    "desk": {
        "geometry": {"num_ports": 16, "aperture": 2.0},
        "signal": {"num_users": 8},
        "training": {
            "stage1": {"epochs": 20, "batches_per_epoch": 200, "batch_size": 16, "lr": 1e-3},
            "stage2": {"epochs": 30, "batches_per_epoch": 200, "batch_size": 8, "lr": 5e-4},
        },
        "evaluate": {"trials": 50, "num_samples": 16, "quadrature_nodes": 24},
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def resolve_config(
    path: str | None = None, profile: str = "table1", overrides: dict | None = None
) -> dict:
    """Layer profile and file on top of the defaults; strict keys."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; options: {sorted(PROFILES)}")
    cfg = _merge(DEFAULTS, PROFILES[profile])
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        cfg = _merge(cfg, loaded)
    if overrides:
        cfg = _merge(cfg, overrides)
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    geo = cfg["geometry"]
    if geo["dimension"] not in (1, 2):
        raise ConfigError(f"geometry.dimension must be 1 or 2, got {geo['dimension']}")
    if geo["dimension"] == 2 and geo["grid_shape"] is None:
        raise ConfigError("2D geometry requires geometry.grid_shape")
    if cfg["channel"]["family"] not in ("rich", "finite"):
        raise ConfigError(f"channel.family must be rich or finite, got {cfg['channel']['family']!r}")
    if cfg["signal"]["num_users"] < 1:
        raise ConfigError("signal.num_users must be >= 1")
    if cfg["signal"]["signal_power"] <= 0:
        raise ConfigError("signal.signal_power must be > 0")
    m = cfg["mask"]
    if (m["train_m_min"] is None) != (m["train_m_max"] is None):
        raise ConfigError("set both or neither of mask.train_m_min / train_m_max")


def geometry_from_config(cfg: dict) -> FasGeometry:
    geo = cfg["geometry"]
    if geo["dimension"] == 1:
        return build_geometry(1, num_ports=geo["num_ports"], aperture=geo["aperture"])
    return build_geometry(
        2, grid_shape=tuple(geo["grid_shape"]), aperture=tuple(geo["aperture"])
    )


def simulator_from_config(cfg: dict, num_users: int | None = None) -> SnapshotSimulator:
    geometry = geometry_from_config(cfg)
    model = make_channel_model(geometry, cfg["channel"])
    sig = cfg["signal"]
    return SnapshotSimulator(
        model,
        num_users if num_users is not None else sig["num_users"],
        sig["signal_power"],
        sig["snr_db"],
    )


def bank_from_config(cfg: dict) -> MarginalFlowBank:
    return MarginalFlowBank(geometry_from_config(cfg), **cfg["model"]["stage1"])


def copula_from_config(cfg: dict) -> AttentionalCopula:
    return AttentionalCopula(
        geometry_from_config(cfg), CopulaHyperParams(**cfg["model"]["stage2"])
    )


def training_mask_sampler(cfg: dict):
    """Mask distribution q(M) used during Stage-2 training."""
    k = geometry_from_config(cfg).num_ports
    m = cfg["mask"]
    if m["train_m_min"] is not None:
        lo, hi = int(m["train_m_min"]), int(m["train_m_max"])
    else:
        lo, hi = default_training_range(k)
    placement = m["train_placement"]

    def sampler(rng: np.random.Generator):
        return sample_mask(k, lo, hi, placement, rng)

    return sampler
