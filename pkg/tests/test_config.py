import pytest
import yaml

from copfama.config import (
    ConfigError,
    bank_from_config,
    copula_from_config,
    geometry_from_config,
    resolve_config,
    simulator_from_config,
    training_mask_sampler,
)
import numpy as np


def test_reference_defaults():
    cfg = resolve_config()
    assert cfg["geometry"]["num_ports"] == 200
    assert cfg["geometry"]["aperture"] == 10.0
    assert cfg["signal"]["num_users"] == 50
    assert cfg["signal"]["snr_db"] == 10.0
    assert cfg["model"]["stage1"] == {
        "flow_layers": 4, "flow_hidden": 64, "mlp_layers": 4, "mlp_dim": 64,
        "embed_dim": 16,
    }
    s2 = cfg["model"]["stage2"]
    assert (s2["embed_dim"], s2["attn_dim"], s2["num_heads"], s2["ff_dim"]) == (16, 128, 8, 256)
    assert (s2["encoder_layers"], s2["decoder_layers"]) == (6, 3)
    assert cfg["training"]["stage1"] == {
        "epochs": 600, "batches_per_epoch": 1000, "batch_size": 16, "lr": 1e-5,
    }
    assert cfg["training"]["stage2"] == {
        "epochs": 300, "batches_per_epoch": 1000, "batch_size": 8, "lr": 5e-6,
    }


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"signal": {"nmu_users": 5}}))
    with pytest.raises(ConfigError, match="signal.nmu_users"):
        resolve_config(str(path))


def test_unknown_top_level_key_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("modle: {}\n")
    with pytest.raises(ConfigError, match="modle"):
        resolve_config(str(path))


def test_unknown_profile_rejected():
    with pytest.raises(ConfigError):
        resolve_config(profile="huge")


def test_desk_profile_small():
    cfg = resolve_config(profile="desk")
    assert cfg["geometry"]["num_ports"] == 16
    assert cfg["training"]["stage1"]["epochs"] == 20
    # untouched sections keep reference defaults
    assert cfg["model"]["stage2"]["attn_dim"] == 128


def test_file_overrides_profile(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"geometry": {"num_ports": 12}}))
    cfg = resolve_config(str(path), profile="desk")
    assert cfg["geometry"]["num_ports"] == 12
    assert cfg["geometry"]["aperture"] == 2.0


def test_validation_errors():
    with pytest.raises(ConfigError):
        resolve_config(overrides={"geometry": {"dimension": 3}})
    with pytest.raises(ConfigError):
        resolve_config(overrides={"geometry": {"dimension": 2}})
    with pytest.raises(ConfigError):
        resolve_config(overrides={"channel": {"family": "urban"}})
    with pytest.raises(ConfigError):
        resolve_config(overrides={"signal": {"num_users": 0}})
    with pytest.raises(ConfigError):
        resolve_config(overrides={"mask": {"train_m_min": 2}})


def test_builders_consistent():
    cfg = resolve_config(profile="desk")
    geo = geometry_from_config(cfg)
    assert geo.num_ports == 16
    sim = simulator_from_config(cfg)
    assert sim.num_users == 8
    assert sim.geometry.to_dict() == geo.to_dict()
    bank = bank_from_config(cfg)
    model = copula_from_config(cfg)
    assert bank.num_coords == model.index_map.num_coords == 96


def test_2d_geometry_from_config():
    cfg = resolve_config(overrides={
        "geometry": {"dimension": 2, "grid_shape": [3, 4], "aperture": [1.0, 2.0],
                     "num_ports": 12}
    })
    geo = geometry_from_config(cfg)
    assert geo.dimension == 2
    assert geo.num_ports == 12


def test_mask_sampler_range():
    cfg = resolve_config(profile="desk")
    sampler = training_mask_sampler(cfg)
    rng = np.random.default_rng(0)
    sizes = {sampler(rng).num_observed for _ in range(200)}
    assert min(sizes) >= 1 and max(sizes) <= 5  # ceil(16/20)=1, ceil(48/10)=5
    cfg2 = resolve_config(profile="desk",
                          overrides={"mask": {"train_m_min": 3, "train_m_max": 4}})
    sizes2 = {training_mask_sampler(cfg2)(rng).num_observed for _ in range(50)}
    assert sizes2 <= {3, 4}
