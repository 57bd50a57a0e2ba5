"""Stage 1: per-coordinate monotone sigmoidal flows.

Each flat coordinate i of the port-major process gets a strictly
increasing map T_i so that F_i(x) = Phi(T_i(x)) is its parametric CDF.
One hyper-network, fed with embeddings of the series index, variable
type, and normalized port position, emits the flow parameters for every
coordinate; the flow weights themselves are shared.

Zero-initializing the hyper-network output makes every T_i the exact
identity, so training starts from standard-normal marginals.
"""

from __future__ import annotations

import copy
import math

import numpy as np
import torch
from torch import nn

from .autodiff import DTYPE, AdamState, backward
from .encoding import IndexMap
from .geometry import FasGeometry

U_EPS = 1e-7  # keep copula inputs strictly inside (0, 1)
_LOG_2PI = math.log(2.0 * math.pi)
_SOFTPLUS_INV_1 = math.log(math.expm1(1.0))  # softplus(x + this) = 1 at x = 0


def _sigmoid_layer(params: torch.Tensor, x: torch.Tensor, hidden: int):
    """One monotone layer y = logit(sum_j w_j * sigmoid(a_j x + b_j)).

    Returns (y, log dy/dx). ``params[..., :]`` packs (a_raw, b, w_logits),
    each of length ``hidden``; raw zeros give the identity map.
    """
    a = torch.nn.functional.softplus(params[..., :hidden] + _SOFTPLUS_INV_1)
    b = params[..., hidden : 2 * hidden]
    w = torch.softmax(params[..., 2 * hidden :], dim=-1)
    pre = a * x[..., None] + b
    s = torch.sigmoid(pre)
    inner = (w * s).sum(dim=-1).clamp(1e-12, 1.0 - 1e-12)
    y = torch.logit(inner)
    dinner = (w * a * s * (1.0 - s)).sum(dim=-1).clamp_min(1e-300)
    logder = torch.log(dinner) - torch.log(inner) - torch.log1p(-inner)
    return y, logder


class MarginalFlowBank(nn.Module):
    """Shared monotone flows with index-conditioned parameters."""

    def __init__(
        self,
        geometry: FasGeometry,
        flow_layers: int = 4,
        flow_hidden: int = 64,
        mlp_layers: int = 4,
        mlp_dim: int = 64,
        embed_dim: int = 16,
    ):
        super().__init__()
        self.geometry = geometry
        self.index_map = IndexMap(geometry.num_ports)
        self.flow_layers = flow_layers
        self.flow_hidden = flow_hidden
        self.embed_dim = embed_dim
        self.mlp_layers = mlp_layers
        self.mlp_dim = mlp_dim

        self.series_embed = nn.Embedding(2, embed_dim)
        self.type_embed = nn.Embedding(3, embed_dim)
        self.position_embed = nn.Linear(geometry.dimension, embed_dim)

        # 2 affine params plus 3 * hidden per sigmoidal layer.
        self.params_per_coord = 2 + 3 * flow_hidden * flow_layers
        layers: list[nn.Module] = [nn.Linear(3 * embed_dim, mlp_dim), nn.ReLU()]
        for _ in range(mlp_layers - 2):
            layers += [nn.Linear(mlp_dim, mlp_dim), nn.ReLU()]
        layers.append(nn.Linear(mlp_dim, self.params_per_coord))
        self.hyper = nn.Sequential(*layers)
        nn.init.zeros_(self.hyper[-1].weight)
        nn.init.zeros_(self.hyper[-1].bias)

        self.register_buffer("coord_features", self._coordinate_features())
        self.to(DTYPE)

    def _coordinate_features(self) -> torch.Tensor:
        """(D, 1 + 1 + dim) integer series/type plus normalized positions."""
        imap = self.index_map
        t_var = imap.var_of_time()
        t_port = imap.port_of_time()
        d_idx = np.repeat([0, 1], imap.num_times)
        var = np.tile(t_var, 2)
        port = np.tile(t_port, 2)
        pos = self.geometry.positions[port] / np.maximum(
            np.asarray(self.geometry.aperture), 1e-12
        )
        feats = np.concatenate(
            [d_idx[:, None], var[:, None], pos], axis=1
        )
        return torch.as_tensor(feats, dtype=DTYPE)

    @property
    def num_coords(self) -> int:
        return self.index_map.num_coords

    def flow_params(self, coords: torch.Tensor | None = None) -> torch.Tensor:
        """Per-coordinate flow parameter vectors, (len(coords), P)."""
        feats = self.coord_features
        if coords is not None:
            feats = feats[coords]
        emb = torch.cat(
            [
                self.series_embed(feats[:, 0].long()),
                self.type_embed(feats[:, 1].long()),
                self.position_embed(feats[:, 2:]),
            ],
            dim=-1,
        )
        return self.hyper(emb)

    def _transform(self, x: torch.Tensor, params: torch.Tensor):
        """T(x) and log T'(x); ``params`` broadcasts against ``x``."""
        scale = torch.nn.functional.softplus(params[..., 0] + _SOFTPLUS_INV_1)
        shift = params[..., 1]
        y = scale * x + shift
        logdet = torch.log(scale)
        step = 3 * self.flow_hidden
        for layer in range(self.flow_layers):
            p = params[..., 2 + layer * step : 2 + (layer + 1) * step]
            y, logder = _sigmoid_layer(p, y, self.flow_hidden)
            logdet = logdet + logder
        return y, logdet

    def _params_for(self, coords) -> torch.Tensor:
        idx = torch.as_tensor(np.atleast_1d(coords), dtype=torch.long)
        return self.flow_params(idx)

    # ---- contract surface -------------------------------------------------

    def transform(self, coords, x) -> torch.Tensor:
        x = torch.as_tensor(x, dtype=DTYPE)
        y, _ = self._transform(x, self._params_for(coords))
        return y

    def cdf(self, coords, x) -> torch.Tensor:
        """F_i(x) = Phi(T_i(x)), clamped to [eps, 1 - eps]."""
        x = torch.as_tensor(x, dtype=DTYPE)
        if not torch.isfinite(x).all():
            raise ValueError("cdf: non-finite input")
        y, _ = self._transform(x, self._params_for(coords))
        return torch.special.ndtr(y).clamp(U_EPS, 1.0 - U_EPS)

    def logpdf(self, coords, x) -> torch.Tensor:
        x = torch.as_tensor(x, dtype=DTYPE)
        y, logdet = self._transform(x, self._params_for(coords))
        return -0.5 * y * y - 0.5 * _LOG_2PI + logdet

    def logpdf_batch(self, x: torch.Tensor) -> torch.Tensor:
        """Log density of every coordinate of a (B, D) batch."""
        params = self.flow_params()  # (D, P)
        y, logdet = self._transform(x, params.unsqueeze(0))
        return -0.5 * y * y - 0.5 * _LOG_2PI + logdet

    def cdf_batch(self, x: torch.Tensor) -> torch.Tensor:
        params = self.flow_params()
        y, _ = self._transform(x, params.unsqueeze(0))
        return torch.special.ndtr(y).clamp(U_EPS, 1.0 - U_EPS)

    def inverse_cdf(self, coords, u) -> torch.Tensor:
        """Bisection inverse of the CDF; bracket found by doubling."""
        u = torch.as_tensor(u, dtype=DTYPE)
        if torch.any(u <= 0) or torch.any(u >= 1):
            raise ValueError("inverse_cdf: u must lie strictly inside (0, 1)")
        params = self._params_for(coords)
        with torch.no_grad():
            target = torch.special.ndtri(u)
            lo = -torch.ones_like(u + params[..., 0])
            hi = torch.ones_like(lo)
            for _ in range(64):
                y_lo, _ = self._transform(lo, params)
                y_hi, _ = self._transform(hi, params)
                need_lo = y_lo > target
                need_hi = y_hi < target
                if not (need_lo.any() or need_hi.any()):
                    break
                lo = torch.where(need_lo, lo * 2.0, lo)
                hi = torch.where(need_hi, hi * 2.0, hi)
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                y_mid, _ = self._transform(mid, params)
                go_right = y_mid < target
                lo = torch.where(go_right, mid, lo)
                hi = torch.where(go_right, hi, mid)
                if float((hi - lo).max()) < 1e-13:
                    break
            return 0.5 * (lo + hi)

    def inverse_cdf_coords(self, coords: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        """Vector inverse for an explicit coordinate index tensor."""
        return self.inverse_cdf(coords.cpu().numpy(), u)

    def hyperparams(self) -> dict:
        return {
            "flow_layers": self.flow_layers,
            "flow_hidden": self.flow_hidden,
            "mlp_layers": self.mlp_layers,
            "mlp_dim": self.mlp_dim,
            "embed_dim": self.embed_dim,
        }


def train_marginals(
    bank: MarginalFlowBank,
    simulator,
    epochs: int,
    batches_per_epoch: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    log_every: int = 0,
) -> list[float]:
    """Maximize the factorized log-likelihood with Adam.

    Returns the per-epoch mean negative log-likelihood (per coordinate).
    On a non-finite loss the last epoch-end parameters are restored and
    training stops.
    """
    params = [p for p in bank.parameters() if p.requires_grad]
    opt = AdamState(params, lr=lr)
    trajectory: list[float] = []
    last_good = copy.deepcopy(bank.state_dict())
    for epoch in range(epochs):
        total = 0.0
        for _ in range(batches_per_epoch):
            batch = torch.as_tensor(simulator.batch_flat(rng, batch_size), dtype=DTYPE)
            loss = -bank.logpdf_batch(batch).mean()
            if not torch.isfinite(loss):
                bank.load_state_dict(last_good)
                return trajectory
            grads = backward(loss, params)
            opt.step(grads)
            total += float(loss.detach())
        trajectory.append(total / batches_per_epoch)
        last_good = copy.deepcopy(bank.state_dict())
        if log_every and (epoch + 1) % log_every == 0:
            print(f"stage1 epoch {epoch + 1}/{epochs}: nll {trajectory[-1]:.4f}")
    return trajectory
