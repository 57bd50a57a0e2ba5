"""Stage 2: masked attentional copula over port-major coordinates.

Observed coordinates become value-carrying tokens processed by a
self-attention encoder; unobserved coordinates become target tokens that
cross-attend to the encoded context. Each target's decoder output
parameterizes a monotone flow on (0, 1) whose density is that
coordinate's conditional copula factor. Targets are conditionally
independent given the context (the literal product factorization); a
sequential sampling variant is available behind a flag for ablation.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from .autodiff import DTYPE, AdamState, backward
from .encoding import IndexMap, Mask
from .geometry import FasGeometry
from .marginal import U_EPS, MarginalFlowBank, _SOFTPLUS_INV_1

_NEG_INF = -1e30


@dataclass
class CopulaHyperParams:
    embed_dim: int = 16
    attn_dim: int = 128
    num_heads: int = 8
    ff_dim: int = 256
    encoder_layers: int = 6
    decoder_layers: int = 3
    input_mlp_layers: int = 3
    head_mlp_layers: int = 4
    head_mlp_dim: int = 64
    head_flow_layers: int = 2
    head_flow_hidden: int = 16
    target_noise_scale: float = 0.01

    def to_dict(self) -> dict:
        return asdict(self)


def _mlp(dim_in: int, dim_hidden: int, dim_out: int, layers: int) -> nn.Sequential:
    mods: list[nn.Module] = [nn.Linear(dim_in, dim_hidden), nn.ReLU()]
    for _ in range(layers - 2):
        mods += [nn.Linear(dim_hidden, dim_hidden), nn.ReLU()]
    mods.append(nn.Linear(dim_hidden, dim_out))
    return nn.Sequential(*mods)


def _attention(q, k, v, num_heads: int, key_valid: torch.Tensor | None):
    """Multi-head scaled dot-product attention.

    key_valid: (B, Nk) bool; fully masked-out queries yield zero output.
    """
    b, nq, dim = q.shape
    nk = k.shape[1]
    hd = dim // num_heads
    q = q.view(b, nq, num_heads, hd).transpose(1, 2)
    k = k.view(b, nk, num_heads, hd).transpose(1, 2)
    v = v.view(b, nk, num_heads, hd).transpose(1, 2)
    scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
    if key_valid is not None:
        scores = scores.masked_fill(~key_valid[:, None, None, :], _NEG_INF)
    weights = torch.softmax(scores, dim=-1)
    if key_valid is not None:
        none_valid = ~key_valid.any(dim=-1)
        weights = torch.where(
            none_valid[:, None, None, None], torch.zeros_like(weights), weights
        )
    out = weights @ v
    return out.transpose(1, 2).reshape(b, nq, dim)


class _SelfAttentionBlock(nn.Module):
    """Pre-layer-norm self-attention + feedforward."""

    def __init__(self, dim: int, heads: int, ff_dim: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.ReLU(), nn.Linear(ff_dim, dim))

    def forward(self, x, valid):
        h = self.ln1(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        x = x + self.out(_attention(q, k, v, self.heads, valid))
        return x + self.ff(self.ln2(x))


class _CrossAttentionBlock(nn.Module):
    """Pre-layer-norm cross-attention + feedforward (no target self-attention,
    keeping targets conditionally independent given the context)."""

    def __init__(self, dim: int, heads: int, ff_dim: int):
        super().__init__()
        self.heads = heads
        self.ln_q = nn.LayerNorm(dim)
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, 2 * dim)
        self.out = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.ReLU(), nn.Linear(ff_dim, dim))

    def forward(self, x, context, context_valid):
        if context.shape[1] > 0:
            q = self.q(self.ln_q(x))
            k, v = self.kv(context).chunk(2, dim=-1)
            x = x + self.out(_attention(q, k, v, self.heads, context_valid))
        return x + self.ff(self.ln2(x))


def _head_layer_params(params: torch.Tensor, hidden: int):
    a = torch.nn.functional.softplus(params[..., :hidden] + _SOFTPLUS_INV_1)
    b = params[..., hidden : 2 * hidden]
    w = torch.softmax(params[..., 2 * hidden :], dim=-1)
    return a, b, w


class AttentionalCopula(nn.Module):
    """Transformer encoder/decoder emitting per-target densities on (0, 1)."""

    def __init__(self, geometry: FasGeometry, hp: CopulaHyperParams | None = None):
        super().__init__()
        self.geometry = geometry
        self.hp = hp if hp is not None else CopulaHyperParams()
        hp = self.hp
        self.index_map = IndexMap(geometry.num_ports)
        t = self.index_map.num_times

        self.series_embed = nn.Embedding(2, hp.embed_dim)
        self.time_embed = nn.Embedding(t, hp.embed_dim)
        self.type_embed = nn.Embedding(3, hp.embed_dim)
        self.mask_embed = nn.Embedding(2, hp.embed_dim)
        self.value_proj = nn.Linear(2, hp.embed_dim)

        self.hist_input = _mlp(hp.embed_dim, hp.attn_dim, hp.attn_dim, hp.input_mlp_layers)
        self.target_input = _mlp(hp.embed_dim, hp.attn_dim, hp.attn_dim, hp.input_mlp_layers)

        self.encoder = nn.ModuleList(
            _SelfAttentionBlock(hp.attn_dim, hp.num_heads, hp.ff_dim)
            for _ in range(hp.encoder_layers)
        )
        self.decoder = nn.ModuleList(
            _CrossAttentionBlock(hp.attn_dim, hp.num_heads, hp.ff_dim)
            for _ in range(hp.decoder_layers)
        )
        self.head_norm = nn.LayerNorm(hp.attn_dim)
        self.head_params_len = hp.head_flow_layers * 3 * hp.head_flow_hidden
        self.head = _mlp(hp.attn_dim, hp.head_mlp_dim, self.head_params_len, hp.head_mlp_layers)
        # Uniform copula at initialization.
        nn.init.zeros_(self.head[-1].weight)
        nn.init.zeros_(self.head[-1].bias)

        d_idx, t_idx = np.divmod(np.arange(self.index_map.num_coords), t)
        self.register_buffer("coord_series", torch.as_tensor(d_idx, dtype=torch.long))
        self.register_buffer("coord_time", torch.as_tensor(t_idx, dtype=torch.long))
        self.register_buffer(
            "coord_type",
            torch.as_tensor(np.tile(self.index_map.var_of_time(), 2), dtype=torch.long),
        )
        self.to(DTYPE)

    # ---- tokens -------------------------------------------------------------

    def _base_embedding(self, coords: torch.Tensor, observed: bool) -> torch.Tensor:
        e = (
            self.series_embed(self.coord_series[coords])
            + self.time_embed(self.coord_time[coords])
            + self.type_embed(self.coord_type[coords])
            + self.mask_embed(
                torch.ones_like(coords) if observed else torch.zeros_like(coords)
            )
        )
        return e

    def historical_tokens(self, coords, u, x) -> torch.Tensor:
        """Value-carrying tokens for observed coordinates."""
        if u.shape != x.shape:
            raise ValueError("uniforms and values must align with observed coordinates")
        vals = torch.stack([u, x], dim=-1)
        return self._base_embedding(coords, True) + self.value_proj(vals)

    def target_tokens(self, coords, noise: torch.Tensor | None) -> torch.Tensor:
        e = self._base_embedding(coords, False)
        if noise is not None:
            e = e + self.hp.target_noise_scale * noise
        return e

    def encode_context(self, hist_tokens: torch.Tensor, valid: torch.Tensor | None = None):
        """Context vector per historical token."""
        squeeze = hist_tokens.dim() == 2
        if squeeze:
            hist_tokens = hist_tokens.unsqueeze(0)
        x = self.hist_input(hist_tokens)
        for block in self.encoder:
            x = block(x, valid)
        return x.squeeze(0) if squeeze else x

    def decode_params(self, tgt_tokens, context, context_valid=None):
        """Per-target density-head parameter vectors."""
        squeeze = tgt_tokens.dim() == 2
        if squeeze:
            tgt_tokens = tgt_tokens.unsqueeze(0)
            context = context.unsqueeze(0)
        x = self.target_input(tgt_tokens)
        for block in self.decoder:
            x = block(x, context, context_valid)
        params = self.head(self.head_norm(x))
        return params.squeeze(0) if squeeze else params

    # ---- density head -------------------------------------------------------

    def head_logdensity(self, params: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        """log c_i(u) of the monotone flow on (0, 1) given head parameters."""
        hp = self.hp
        v = torch.as_tensor(u, dtype=DTYPE).clamp(U_EPS, 1.0 - U_EPS)
        logc = torch.zeros_like(v)
        step = 3 * hp.head_flow_hidden
        for layer in range(hp.head_flow_layers):
            a, b, w = _head_layer_params(
                params[..., layer * step : (layer + 1) * step], hp.head_flow_hidden
            )
            z = torch.logit(v)
            s = torch.sigmoid(a * z[..., None] + b)
            der = (w * a * s * (1.0 - s)).sum(dim=-1).clamp_min(1e-300)
            logc = logc + torch.log(der) - torch.log(v) - torch.log1p(-v)
            v = (w * s).sum(dim=-1).clamp(1e-12, 1.0 - 1e-12)
        return logc

    def head_cdf(self, params: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        hp = self.hp
        v = torch.as_tensor(u, dtype=DTYPE).clamp(U_EPS, 1.0 - U_EPS)
        step = 3 * hp.head_flow_hidden
        for layer in range(hp.head_flow_layers):
            a, b, w = _head_layer_params(
                params[..., layer * step : (layer + 1) * step], hp.head_flow_hidden
            )
            s = torch.sigmoid(a * torch.logit(v)[..., None] + b)
            v = (w * s).sum(dim=-1).clamp(1e-12, 1.0 - 1e-12)
        return v

    def head_inverse(self, params: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        """Bisection inverse of the head CDF on (0, 1)."""
        with torch.no_grad():
            lo = torch.full_like(target, U_EPS)
            hi = torch.full_like(target, 1.0 - U_EPS)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                go_right = self.head_cdf(params, mid) < target
                lo = torch.where(go_right, mid, lo)
                hi = torch.where(go_right, hi, mid)
                if float((hi - lo).max()) < 1e-14:
                    break
            return 0.5 * (lo + hi)

    # ---- batched training path ----------------------------------------------

    def _padded_batch(self, x: torch.Tensor, u: torch.Tensor, mask: torch.Tensor, noise_gen):
        """Build padded token tensors for per-sample masks.

        Returns (hist_tokens, hist_valid, tgt_tokens, tgt_valid, tgt_coords).
        """
        bsz, dim = x.shape
        n_hist = int(mask.sum(dim=1).max())
        n_tgt = int((~mask).sum(dim=1).max())
        hist_coords = torch.zeros(bsz, max(n_hist, 1), dtype=torch.long)
        hist_valid = torch.zeros(bsz, max(n_hist, 1), dtype=torch.bool)
        tgt_coords = torch.zeros(bsz, n_tgt, dtype=torch.long)
        tgt_valid = torch.zeros(bsz, n_tgt, dtype=torch.bool)
        for n in range(bsz):
            hi = torch.nonzero(mask[n], as_tuple=False).squeeze(-1)
            ti = torch.nonzero(~mask[n], as_tuple=False).squeeze(-1)
            hist_coords[n, : hi.numel()] = hi
            hist_valid[n, : hi.numel()] = True
            tgt_coords[n, : ti.numel()] = ti
            tgt_valid[n, : ti.numel()] = True

        batch_idx = torch.arange(bsz)[:, None]
        hist_tokens = self.historical_tokens(
            hist_coords, u[batch_idx, hist_coords], x[batch_idx, hist_coords]
        )
        noise = torch.randn(
            bsz, n_tgt, self.hp.embed_dim, dtype=DTYPE, generator=noise_gen
        )
        tgt_tokens = self.target_tokens(tgt_coords, noise)
        return hist_tokens, hist_valid, tgt_tokens, tgt_valid, tgt_coords

    def batch_loglik(self, x, u, mask, noise_gen=None):
        """Sum over targets of log c per sample: (B,) tensor plus target counts."""
        hist_tokens, hist_valid, tgt_tokens, tgt_valid, tgt_coords = self._padded_batch(
            x, u, mask, noise_gen
        )
        context = self.encode_context(hist_tokens, hist_valid)
        params = self.decode_params(tgt_tokens, context, hist_valid)
        u_tgt = u[torch.arange(x.shape[0])[:, None], tgt_coords]
        logc = self.head_logdensity(params, u_tgt)
        logc = torch.where(tgt_valid, logc, torch.zeros_like(logc))
        return logc.sum(dim=1), tgt_valid.sum(dim=1)

    # ---- single-snapshot inference -------------------------------------------

    def conditional_logdensity(self, series_flat, mask: Mask, bank: MarginalFlowBank, u_targets):
        """log c_i(u_i | context) for every unobserved coordinate of one snapshot."""
        params, tgt_idx = self._target_params(series_flat, mask, bank, noise=None)
        u_targets = torch.as_tensor(u_targets, dtype=DTYPE)
        if u_targets.shape[-1] != tgt_idx.numel():
            raise ValueError(
                f"expected {tgt_idx.numel()} target uniforms, got {u_targets.shape[-1]}"
            )
        return self.head_logdensity(params, u_targets)

    def _target_params(self, series_flat, mask: Mask, bank: MarginalFlowBank, noise):
        x = torch.as_tensor(np.asarray(series_flat), dtype=DTYPE)
        obs = torch.as_tensor(mask.flat_indicator())
        hist_idx = torch.nonzero(obs, as_tuple=False).squeeze(-1)
        tgt_idx = torch.nonzero(~obs, as_tuple=False).squeeze(-1)
        with torch.no_grad():
            u_hist = bank.cdf(hist_idx.numpy(), x[hist_idx])
            hist_tokens = self.historical_tokens(hist_idx, u_hist, x[hist_idx])
            context = self.encode_context(hist_tokens)
            tgt_tokens = self.target_tokens(tgt_idx, noise)
            params = self.decode_params(tgt_tokens, context)
        return params, tgt_idx


def sample_posterior(
    series_flat: np.ndarray,
    mask: Mask,
    bank: MarginalFlowBank,
    model: AttentionalCopula,
    num_samples: int,
    rng: np.random.Generator,
    sequential: bool = False,
) -> np.ndarray:
    """Draw imputed flat series; observed coordinates pass through unchanged.

    Returns (num_samples, D). ``sequential`` enables the autoregressive
    ablation where each sampled target is appended to the context.
    """
    if sequential:
        return _sample_posterior_sequential(series_flat, mask, bank, model, num_samples, rng)
    x = np.asarray(series_flat, dtype=float)
    obs = mask.flat_indicator()
    tgt_idx = np.nonzero(~obs)[0]
    out = np.tile(x, (num_samples, 1))
    gen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)))
    for s in range(num_samples):
        noise = torch.randn(tgt_idx.size, model.hp.embed_dim, dtype=DTYPE, generator=gen)
        params, tgt = model._target_params(x, mask, bank, noise)
        w = torch.as_tensor(rng.uniform(U_EPS, 1.0 - U_EPS, tgt_idx.size), dtype=DTYPE)
        u = model.head_inverse(params, w).clamp(U_EPS, 1.0 - U_EPS)
        out[s, tgt_idx] = bank.inverse_cdf(tgt.numpy(), u).numpy()
    return out


def _sample_posterior_sequential(series_flat, mask, bank, model, num_samples, rng):
    x = np.asarray(series_flat, dtype=float)
    obs = mask.flat_indicator()
    tgt_idx = np.nonzero(~obs)[0]
    out = np.tile(x, (num_samples, 1))
    gen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)))
    for s in range(num_samples):
        cur_obs = obs.copy()
        cur_x = x.copy()
        for i in tgt_idx:
            hist_idx = torch.as_tensor(np.nonzero(cur_obs)[0], dtype=torch.long)
            with torch.no_grad():
                u_hist = bank.cdf(hist_idx.numpy(), torch.as_tensor(cur_x[hist_idx.numpy()], dtype=DTYPE))
                context = model.encode_context(
                    model.historical_tokens(hist_idx, u_hist, torch.as_tensor(cur_x[hist_idx.numpy()], dtype=DTYPE))
                )
                coord = torch.as_tensor([i], dtype=torch.long)
                noise = torch.randn(1, model.hp.embed_dim, dtype=DTYPE, generator=gen)
                params = model.decode_params(model.target_tokens(coord, noise), context)
                w = torch.as_tensor([rng.uniform(U_EPS, 1.0 - U_EPS)], dtype=DTYPE)
                u = model.head_inverse(params, w).clamp(U_EPS, 1.0 - U_EPS)
                cur_x[i] = float(bank.inverse_cdf([int(i)], u))
            cur_obs[i] = True
        out[s, tgt_idx] = cur_x[tgt_idx]
    return out


def posterior_mean(
    series_flat: np.ndarray,
    mask: Mask,
    bank: MarginalFlowBank,
    model: AttentionalCopula,
    num_nodes: int = 64,
) -> np.ndarray:
    """Model posterior mean per coordinate by Gauss-Legendre quadrature.

    E[X_i] = int_0^1 F_i^{-1}(G_i^{-1}(w)) dw; deterministic (target-token
    noise at its mean), so repeat runs agree bit for bit.
    """
    x = np.asarray(series_flat, dtype=float)
    obs = mask.flat_indicator()
    tgt_np = np.nonzero(~obs)[0]
    params, tgt = model._target_params(x, mask, bank, noise=None)
    nodes, weights = np.polynomial.legendre.leggauss(num_nodes)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    mean = x.copy()
    # One vectorized inverse per stage: (nodes, targets) broadcast against
    # the per-target parameter rows.
    target = torch.as_tensor(nodes, dtype=DTYPE)[:, None].expand(num_nodes, tgt_np.size)
    u = model.head_inverse(params, target.contiguous()).clamp(U_EPS, 1.0 - U_EPS)
    values = bank.inverse_cdf(tgt.numpy(), u)
    mean[tgt_np] = (torch.as_tensor(weights, dtype=DTYPE) @ values).numpy()
    return mean


def train_copula_masked(
    model: AttentionalCopula,
    bank: MarginalFlowBank,
    simulator,
    mask_sampler,
    epochs: int,
    batches_per_epoch: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
    log_every: int = 0,
) -> list[float]:
    """Alg.-style Stage-2 loop: fresh snapshots and masks per batch, Adam
    ascent on the summed conditional log-likelihood with the Stage-1 bank
    frozen. Returns per-epoch mean conditional NLL per target coordinate."""
    for p in bank.parameters():
        p.requires_grad_(False)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = AdamState(params, lr=lr)
    gen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)))
    trajectory: list[float] = []
    last_good = copy.deepcopy(model.state_dict())
    for epoch in range(epochs):
        total, count = 0.0, 0
        for _ in range(batches_per_epoch):
            batch = torch.as_tensor(simulator.batch_flat(rng, batch_size), dtype=DTYPE)
            masks = torch.stack(
                [
                    torch.as_tensor(mask_sampler(rng).flat_indicator())
                    for _ in range(batch_size)
                ]
            )
            with torch.no_grad():
                uniforms = bank.cdf_batch(batch)
            loglik, n_tgt = model.batch_loglik(batch, uniforms, masks, gen)
            loss = -loglik.mean()
            if not torch.isfinite(loss):
                model.load_state_dict(last_good)
                return trajectory
            grads = backward(loss, params)
            opt.step(grads)
            total += float((-loglik).sum().detach())
            count += int(n_tgt.sum())
        trajectory.append(total / count)
        last_good = copy.deepcopy(model.state_dict())
        if log_every and (epoch + 1) % log_every == 0:
            print(f"stage2 epoch {epoch + 1}/{epochs}: nll/coord {trajectory[-1]:.4f}")
    return trajectory
