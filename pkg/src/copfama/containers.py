"""On-disk artifacts: snapshot containers, checkpoints, tables, manifests.

Every artifact embeds a format version plus the config hash and seed that
produced it, and is written atomically (temp file + rename). Loading a
newer format version or mixing mismatched config hashes fails loudly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import zipfile

import numpy as np
import torch

from .channel import Snapshot
from .geometry import FasGeometry

CONTAINER_VERSION = 1
CHECKPOINT_VERSION = 1


class ArtifactError(ValueError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _atomic_write_bytes(path: str, data: bytes):
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, payload: dict):
    _atomic_write_bytes(path, (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode())


def write_csv(path: str, rows: list[dict], fieldnames: list[str]):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()}
        )
    _atomic_write_bytes(path, buf.getvalue().encode())


# ---- snapshot containers -----------------------------------------------------


def save_snapshots(
    path: str, snapshots: list[Snapshot], geometry: FasGeometry, meta: dict
):
    """Versioned binary container of a snapshot batch plus a JSON manifest."""
    count = len(snapshots)
    k = geometry.num_ports
    arrays = {
        "version": np.array(CONTAINER_VERSION),
        "geometry": np.frombuffer(json.dumps(geometry.to_dict()).encode(), dtype=np.uint8),
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
    }
    for name in ("r", "h", "interference", "noise"):
        arrays[name] = np.stack([getattr(s, name) for s in snapshots]) if count else np.zeros((0, k), complex)
    arrays["symbol"] = np.array([s.symbol for s in snapshots], dtype=complex)
    arrays["interferer_symbols"] = (
        np.stack([s.interferer_symbols for s in snapshots])
        if count
        else np.zeros((0, 0), complex)
    )
    arrays["scalars"] = (
        np.array([[s.signal_power, s.noise_var, s.num_users] for s in snapshots])
        if count
        else np.zeros((0, 3))
    )
    # Hand-rolled npz with pinned zip timestamps so identical seeds give
    # byte-identical containers.
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            payload = io.BytesIO()
            np.lib.format.write_array(payload, np.ascontiguousarray(arr))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload.getvalue())
    _atomic_write_bytes(path, buf.getvalue())
    write_json(path + ".manifest.json", {"version": CONTAINER_VERSION, "count": count, **meta})


def load_snapshots(path: str) -> tuple[list[Snapshot], FasGeometry, dict]:
    with np.load(path) as data:
        version = int(data["version"][()])
        if version > CONTAINER_VERSION:
            raise ArtifactError(
                f"container version {version} is newer than supported {CONTAINER_VERSION}"
            )
        geometry = FasGeometry.from_dict(json.loads(bytes(data["geometry"]).decode()))
        meta = json.loads(bytes(data["meta"]).decode())
        snaps = []
        for n in range(data["symbol"].shape[0]):
            snaps.append(
                Snapshot(
                    r=data["r"][n],
                    h=data["h"][n],
                    interference=data["interference"][n],
                    noise=data["noise"][n],
                    symbol=complex(data["symbol"][n]),
                    interferer_symbols=data["interferer_symbols"][n],
                    signal_power=float(data["scalars"][n, 0]),
                    noise_var=float(data["scalars"][n, 1]),
                    num_users=int(data["scalars"][n, 2]),
                )
            )
    return snaps, geometry, meta


def snapshots_debug_csv(path: str, snapshots: list[Snapshot]):
    rows = []
    for n, s in enumerate(snapshots):
        for k in range(s.num_ports):
            rows.append(
                {
                    "snapshot": n,
                    "port": k + 1,
                    "re_r": float(s.r[k].real),
                    "im_r": float(s.r[k].imag),
                    "re_h": float(s.h[k].real),
                    "im_h": float(s.h[k].imag),
                    "re_I": float(s.interference[k].real),
                    "im_I": float(s.interference[k].imag),
                }
            )
    write_csv(path, rows, ["snapshot", "port", "re_r", "im_r", "re_h", "im_h", "re_I", "im_I"])


# ---- model checkpoints -------------------------------------------------------


def save_checkpoint(path: str, payload: dict):
    """``payload`` must carry geometry/sim metadata; version added here."""
    payload = dict(payload)
    payload["version"] = CHECKPOINT_VERSION
    buf = io.BytesIO()
    torch.save(payload, buf)
    _atomic_write_bytes(path, buf.getvalue())


def load_checkpoint(path: str) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("version")
    if version is None or version > CHECKPOINT_VERSION:
        raise ArtifactError(
            f"checkpoint version {version} is newer than supported {CHECKPOINT_VERSION}"
        )
    return payload


def check_geometry_match(payload: dict, geometry: FasGeometry):
    stored = payload.get("geometry")
    if stored != geometry.to_dict():
        raise ArtifactError(
            f"checkpoint geometry {stored} does not match requested {geometry.to_dict()}"
        )
