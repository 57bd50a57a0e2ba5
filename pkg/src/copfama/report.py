"""Figure rendering for evaluation sweeps.

The evaluate path writes its delimited tables first and then renders the
matching matplotlib figures next to them, so a results directory is
self-contained: CSV for downstream tooling, PNG for eyeballs.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .sweep import SweepResult

_AXIS_LABEL = {"M": "observed ports M", "U": "number of users U"}


def _series(result: SweepResult, metric: str):
    rows = sorted(
        (r for r in result.rows if r["metric"] == metric), key=lambda r: r["axis_value"]
    )
    xs = [r["axis_value"] for r in rows]
    ys = [r["mean"] for r in rows]
    lo = [r["ci_low"] for r in rows]
    hi = [r["ci_high"] for r in rows]
    return xs, ys, lo, hi


def render_nmse_figure(result: SweepResult, path: str):
    """Imputation NMSE per field versus the sweep axis, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, label in (("nmse_r", "received r"), ("nmse_h", "channel h"), ("nmse_I", "interference I")):
        xs, ys, lo, hi = _series(result, metric)
        if not xs:
            continue
        ax.plot(xs, ys, marker="o", label=label)
        ax.fill_between(xs, lo, hi, alpha=0.2)
    ax.set_xlabel(_AXIS_LABEL.get(result.metadata["axis"], result.metadata["axis"]))
    ax.set_ylabel("NMSE")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_rate_figure(result: SweepResult, path: str):
    """Sum rate for true / predicted / random port selection."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, label in (
        ("sumrate_true", "genie port selection"),
        ("sumrate_predicted", "predicted port selection"),
        ("sumrate_random", "random port"),
    ):
        xs, ys, lo, hi = _series(result, metric)
        if not xs:
            continue
        ax.plot(xs, ys, marker="o", label=label)
        ax.fill_between(xs, lo, hi, alpha=0.2)
    ax.set_xlabel(_AXIS_LABEL.get(result.metadata["axis"], result.metadata["axis"]))
    ax.set_ylabel("sum rate (bits/use)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figures(result: SweepResult, out_dir: str, stem: str = "sweep") -> list[str]:
    """Render every applicable figure; returns the paths written."""
    written = []
    metrics = {r["metric"] for r in result.rows}
    nmse_path = os.path.join(out_dir, f"{stem}_nmse.png")
    render_nmse_figure(result, nmse_path)
    written.append(nmse_path)
    if "sumrate_true" in metrics:
        rate_path = os.path.join(out_dir, f"{stem}_rate.png")
        render_rate_figure(result, rate_path)
        written.append(rate_path)
    return written


def render_training_curve(trajectory: list[float], path: str, title: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(trajectory) + 1), trajectory, marker=".")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean NLL")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
