"""Command-line pipeline: simulate, train both stages, impute, evaluate.

Every command resolves its configuration (defaults -> profile -> file),
writes the resolved config next to its outputs, and stamps artifacts with
the config hash and seed. Stage order is enforced through checkpoints:
``train-copula`` requires a Stage-1 checkpoint, ``impute``/``evaluate``
with the learned model require a Stage-2 checkpoint, and any checkpoint
is rejected if its geometry disagrees with the active config.
"""

from __future__ import annotations

import os

import click
import numpy as np

from . import config as cfgmod
from . import report
from .containers import (
    ArtifactError,
    check_geometry_match,
    config_hash,
    load_checkpoint,
    save_checkpoint,
    save_snapshots,
    snapshots_debug_csv,
    write_csv,
    write_json,
)
from .copula import train_copula_masked
from .encoding import Mask, decode, equally_spaced_ports
from .impute import LearnedImputer, ZeroImputer, oracle_imputer_for
from .marginal import train_marginals
from .sweep import ExperimentConfig, run_sweep


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                      help="YAML config layered over the profile.")(fn)
    fn = click.option("--profile", type=click.Choice(sorted(cfgmod.PROFILES)), default="table1",
                      show_default=True)(fn)
    fn = click.option("--seed", type=int, default=None, help="Overrides the config seed.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), required=True,
                      help="Output directory.")(fn)
    return fn


def _resolve(config_path, profile, seed, out_dir, command: str):
    cfg = cfgmod.resolve_config(config_path, profile)
    if seed is not None:
        cfg["seed"] = int(seed)
    os.makedirs(out_dir, exist_ok=True)
    stamp = {"command": command, "profile": profile, "config_hash": config_hash(cfg)}
    write_json(os.path.join(out_dir, f"{command}_config.json"), {**stamp, "config": cfg})
    return cfg, stamp


def _load_stage(path: str, needed: str, geometry) -> dict:
    payload = load_checkpoint(path)
    stage = payload.get("stage")
    order = {"marginals": 1, "copula": 2}
    if stage not in order or order[stage] < order[needed]:
        raise ArtifactError(
            f"checkpoint {path} holds stage {stage!r}; this command needs a "
            f"{needed!r} checkpoint — run the earlier training stage first"
        )
    check_geometry_match(payload, geometry)
    return payload


def _restore_bank(cfg, payload):
    bank = cfgmod.bank_from_config(cfg)
    bank.load_state_dict(payload["bank_state"])
    return bank


def _restore_model(cfg, payload):
    model = cfgmod.copula_from_config(cfg)
    model.load_state_dict(payload["copula_state"])
    return model


def _make_imputer(kind: str, simulator, cfg, checkpoint):
    if kind == "oracle":
        return oracle_imputer_for(simulator)
    if kind == "zero":
        return ZeroImputer(simulator.geometry)
    if checkpoint is None:
        raise click.UsageError("--checkpoint is required for the learned imputer")
    payload = _load_stage(checkpoint, "copula", simulator.geometry)
    return LearnedImputer(
        _restore_bank(cfg, payload),
        _restore_model(cfg, payload),
        cfg["evaluate"]["quadrature_nodes"],
    )


@click.group()
def main():
    """Copula-aided port imputation for fluid-antenna multiple access."""


@main.command()
@_common
@click.option("--count", type=int, default=100, show_default=True,
              help="Number of snapshots to draw.")
def simulate(config_path, profile, seed, out_dir, count):
    """Draw multiuser snapshots into a versioned container plus debug CSV."""
    cfg, stamp = _resolve(config_path, profile, seed, out_dir, "simulate")
    simulator = cfgmod.simulator_from_config(cfg)
    rng = np.random.default_rng(cfg["seed"])
    snaps = [simulator.snapshot(rng) for _ in range(count)]
    meta = {**stamp, "seed": cfg["seed"], "simulator": simulator.params_dict()}
    save_snapshots(os.path.join(out_dir, "snapshots.npz"), snaps, simulator.geometry, meta)
    snapshots_debug_csv(os.path.join(out_dir, "snapshots.csv"), snaps)
    click.echo(f"wrote {count} snapshots to {out_dir}")


@main.command("train-marginals")
@_common
@click.option("--checkpoint", type=click.Path(exists=True), default=None,
              help="Stage-1 checkpoint to resume from.")
def train_marginals_cmd(config_path, profile, seed, out_dir, checkpoint):
    """Fit the per-coordinate marginal flows (Stage 1)."""
    cfg, stamp = _resolve(config_path, profile, seed, out_dir, "train-marginals")
    simulator = cfgmod.simulator_from_config(cfg)
    bank = cfgmod.bank_from_config(cfg)
    if checkpoint is not None:
        payload = _load_stage(checkpoint, "marginals", simulator.geometry)
        bank.load_state_dict(payload["bank_state"])
    rng = np.random.default_rng([cfg["seed"], 1])
    tr = cfg["training"]["stage1"]
    trajectory = train_marginals(
        bank, simulator, tr["epochs"], tr["batches_per_epoch"], tr["batch_size"],
        tr["lr"], rng, log_every=max(tr["epochs"] // 10, 1),
    )
    save_checkpoint(
        os.path.join(out_dir, "marginals.ckpt"),
        {
            "stage": "marginals",
            "geometry": simulator.geometry.to_dict(),
            "simulator": simulator.params_dict(),
            "bank_state": bank.state_dict(),
            "bank_hyperparams": bank.hyperparams(),
            "trajectory": trajectory,
            "seed": cfg["seed"],
            **stamp,
        },
    )
    write_csv(
        os.path.join(out_dir, "stage1_nll.csv"),
        [{"epoch": e + 1, "nll": v} for e, v in enumerate(trajectory)],
        ["epoch", "nll"],
    )
    report.render_training_curve(
        trajectory, os.path.join(out_dir, "stage1_nll.png"), "Stage 1 marginal NLL"
    )
    click.echo(f"stage 1 done: {len(trajectory)} epochs, final nll "
               f"{trajectory[-1]:.4f}" if trajectory else "stage 1 done (no epochs)")


@main.command("train-copula")
@_common
@click.option("--checkpoint", type=click.Path(exists=True), required=True,
              help="Stage-1 checkpoint (marginal flows).")
def train_copula_cmd(config_path, profile, seed, out_dir, checkpoint):
    """Fit the masked attentional copula (Stage 2) on frozen marginals."""
    cfg, stamp = _resolve(config_path, profile, seed, out_dir, "train-copula")
    simulator = cfgmod.simulator_from_config(cfg)
    payload = _load_stage(checkpoint, "marginals", simulator.geometry)
    bank = _restore_bank(cfg, payload)
    model = cfgmod.copula_from_config(cfg)
    rng = np.random.default_rng([cfg["seed"], 2])
    tr = cfg["training"]["stage2"]
    trajectory = train_copula_masked(
        model, bank, simulator, cfgmod.training_mask_sampler(cfg),
        tr["epochs"], tr["batches_per_epoch"], tr["batch_size"], tr["lr"], rng,
        log_every=max(tr["epochs"] // 10, 1),
    )
    save_checkpoint(
        os.path.join(out_dir, "model.ckpt"),
        {
            "stage": "copula",
            "geometry": simulator.geometry.to_dict(),
            "simulator": simulator.params_dict(),
            "bank_state": bank.state_dict(),
            "bank_hyperparams": bank.hyperparams(),
            "copula_state": model.state_dict(),
            "copula_hyperparams": model.hp.to_dict(),
            "trajectory": trajectory,
            "seed": cfg["seed"],
            **stamp,
        },
    )
    write_csv(
        os.path.join(out_dir, "stage2_nll.csv"),
        [{"epoch": e + 1, "nll": v} for e, v in enumerate(trajectory)],
        ["epoch", "nll"],
    )
    report.render_training_curve(
        trajectory, os.path.join(out_dir, "stage2_nll.png"), "Stage 2 copula NLL"
    )
    click.echo(f"stage 2 done: {len(trajectory)} epochs" +
               (f", final nll/coord {trajectory[-1]:.4f}" if trajectory else ""))


@main.command()
@_common
@click.option("--checkpoint", type=click.Path(exists=True), default=None,
              help="Stage-2 checkpoint (required for --imputer model).")
@click.option("--imputer", type=click.Choice(["model", "oracle", "zero"]),
              default="model", show_default=True)
@click.option("--num-observed", type=int, default=None,
              help="Observed ports M (default: K // 4, at least 1).")
def impute(config_path, profile, seed, out_dir, checkpoint, imputer, num_observed):
    """Impute one fresh snapshot and tabulate truth vs posterior mean."""
    cfg, _ = _resolve(config_path, profile, seed, out_dir, "impute")
    simulator = cfgmod.simulator_from_config(cfg)
    engine = _make_imputer(imputer, simulator, cfg, checkpoint)
    k = simulator.num_ports
    m = num_observed if num_observed is not None else max(k // 4, 1)
    mask = Mask(equally_spaced_ports(k, m), k)
    rng = np.random.default_rng([cfg["seed"], 3])
    snap = simulator.snapshot(rng)
    from .encoding import encode

    series = encode(snap).flat()
    mean = engine.posterior_mean(series, mask)
    est = decode(mean.reshape(2, -1))
    draws = engine.sample(series, mask, cfg["evaluate"]["num_samples"], rng)
    h_s = np.stack([decode(d.reshape(2, -1))[1] for d in draws])
    i_s = np.stack([decode(d.reshape(2, -1))[2] for d in draws])
    from .metrics import predicted_sinr, select_port

    gamma_hat = predicted_sinr(h_s, i_s, snap.h, mask.observed_ports)
    truth = (snap.r, snap.h, snap.interference)
    observed = set(mask.observed_ports.tolist())
    rows = []
    for port in range(k):
        row = {"port": port + 1, "observed": int(port in observed)}
        for name, tru, hat in zip(("r", "h", "I"), truth, est):
            row[f"re_{name}"] = float(tru[port].real)
            row[f"im_{name}"] = float(tru[port].imag)
            row[f"re_{name}_hat"] = float(hat[port].real)
            row[f"im_{name}_hat"] = float(hat[port].imag)
        row["gamma_hat"] = float(gamma_hat[port])
        rows.append(row)
    fields = ["port", "observed"] + [
        f"{p}_{n}{s}" for n in ("r", "h", "I") for s in ("", "_hat") for p in ("re", "im")
    ] + ["gamma_hat"]
    write_csv(os.path.join(out_dir, "imputed.csv"), rows, fields)
    write_json(
        os.path.join(out_dir, "selection.json"),
        {
            "imputer": engine.name,
            "num_observed": m,
            "observed_ports": sorted(p + 1 for p in observed),
            "selected_port": int(select_port(gamma_hat)) + 1,
        },
    )
    click.echo(f"imputed {k - m} of {k} ports with the {engine.name} imputer")


@main.command()
@_common
@click.option("--checkpoint", type=click.Path(exists=True), default=None,
              help="Stage-2 checkpoint (required for --imputer model).")
@click.option("--imputer", type=click.Choice(["model", "oracle", "zero"]),
              default="model", show_default=True)
@click.option("--axis", type=click.Choice(["M", "U"]), default="M", show_default=True)
@click.option("--values", default="8,16,32", show_default=True,
              help="Comma-separated sweep values for the axis.")
@click.option("--num-observed", type=int, default=None,
              help="Fixed M when sweeping U (default: K // 4).")
@click.option("--no-rates", is_flag=True, help="Skip sum-rate metrics (NMSE only).")
def evaluate(config_path, profile, seed, out_dir, checkpoint, imputer, axis, values,
             num_observed, no_rates):
    """Sweep M or U; write the metric table, metadata, and figures."""
    cfg, stamp = _resolve(config_path, profile, seed, out_dir, "evaluate")
    base_sim = cfgmod.simulator_from_config(cfg)
    k = base_sim.num_ports
    sweep_cfg = ExperimentConfig(
        axis=axis,
        axis_values=[int(v) for v in values.split(",")],
        num_users=cfg["signal"]["num_users"],
        num_observed=num_observed if num_observed is not None else max(k // 4, 1),
        trials=cfg["evaluate"]["trials"],
        num_samples=cfg["evaluate"]["num_samples"],
        seed=cfg["seed"],
        mask_placement=cfg["mask"]["eval_placement"],
        extra={"imputer": imputer, **stamp},
    )
    result = run_sweep(
        sweep_cfg,
        lambda sim: _make_imputer(imputer, sim, cfg, checkpoint),
        lambda num_users: cfgmod.simulator_from_config(cfg, num_users=num_users),
        with_rates=not no_rates,
    )
    write_csv(
        os.path.join(out_dir, "sweep.csv"),
        result.rows,
        ["axis", "axis_value", "metric", "mean", "ci_low", "ci_high", "trials"],
    )
    write_json(os.path.join(out_dir, "sweep_meta.json"), result.metadata)
    figures = report.render_sweep_figures(result, out_dir)
    click.echo(f"wrote sweep.csv, sweep_meta.json and {len(figures)} figure(s) to {out_dir}")


if __name__ == "__main__":
    main()
