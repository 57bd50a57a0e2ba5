"""Dense-tensor arithmetic with reverse-mode differentiation.

A thin contract layer over torch: 64-bit scalars throughout, explicit
shape validation, gradient extraction against an explicit parameter
list, and an Adam optimizer with bias correction that skips non-finite
gradient steps. Keeping the surface narrow makes the finite-difference
oracles in the test suite meaningful for every op the models use.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import torch

logger = logging.getLogger(__name__)

DTYPE = torch.float64


class ShapeError(ValueError):
    pass


def tensor(data, requires_grad: bool = False) -> torch.Tensor:
    return torch.as_tensor(data, dtype=DTYPE).requires_grad_(requires_grad)


def parameter(data) -> torch.Tensor:
    return tensor(data, requires_grad=True)


def _check_elementwise(a: torch.Tensor, b: torch.Tensor, op: str):
    # Only leading-batch broadcasting: shapes must match up to one extra
    # leading dimension on either side.
    if a.shape == b.shape:
        return
    if a.shape[-b.dim():] == b.shape or b.shape[-a.dim():] == a.shape:
        return
    raise ShapeError(f"{op}: incompatible shapes {tuple(a.shape)} vs {tuple(b.shape)}")


def add(a, b):
    _check_elementwise(a, b, "add")
    return a + b


def mul(a, b):
    _check_elementwise(a, b, "mul")
    return a * b


def matmul(a, b):
    if a.shape[-1] != b.shape[-2 if b.dim() > 1 else -1]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {tuple(a.shape)} @ {tuple(b.shape)}"
        )
    return a @ b


def sigmoid(x):
    return torch.sigmoid(x)


def softplus(x):
    return torch.nn.functional.softplus(x)


def tanh(x):
    return torch.tanh(x)


def exp(x):
    return torch.exp(x)


def log(x):
    return torch.log(x)


def softmax(x, dim: int = -1):
    return torch.softmax(x, dim=dim)


def layer_norm(x, weight=None, bias=None, eps: float = 1e-6):
    """Normalize over the last dimension."""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, unbiased=False, keepdim=True)
    out = (x - mean) / torch.sqrt(var + eps)
    if weight is not None:
        out = out * weight
    if bias is not None:
        out = out + bias
    return out


def concat(tensors: Sequence[torch.Tensor], dim: int = -1):
    base = tensors[0].shape
    for t in tensors[1:]:
        a, b = list(base), list(t.shape)
        a[dim] = b[dim] = 0
        if a != b:
            raise ShapeError(f"concat: shapes {tuple(base)} and {tuple(t.shape)} differ off dim {dim}")
    return torch.cat(list(tensors), dim=dim)


def slice_(x, dim: int, start: int, stop: int):
    return x.narrow(dim, start, stop - start)


def backward(loss: torch.Tensor, params: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    """Gradients of a scalar loss w.r.t. ``params``; parameters the loss
    does not depend on get zero gradients."""
    if loss.dim() != 0:
        raise ShapeError(f"backward: loss must be scalar, got shape {tuple(loss.shape)}")
    grads = torch.autograd.grad(loss, list(params), allow_unused=True, retain_graph=False)
    return [g if g is not None else torch.zeros_like(p) for g, p in zip(grads, params)]


class AdamState:
    """Adam with bias correction over an explicit parameter list.

    Steps with any non-finite gradient are skipped and counted rather
    than corrupting the moment accumulators.
    """

    def __init__(
        self,
        params: Sequence[torch.Tensor],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.skipped = 0
        self.m = [torch.zeros_like(p) for p in self.params]
        self.v = [torch.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[torch.Tensor]):
        if any(not torch.isfinite(g).all() for g in grads):
            self.skipped += 1
            logger.warning("adam: non-finite gradient, step skipped (total %d)", self.skipped)
            return
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        with torch.no_grad():
            for p, g, m, v in zip(self.params, grads, self.m, self.v):
                m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
                v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
                p.sub_(self.lr * (m / bc1) / ((v / bc2).sqrt() + self.eps))

    def state_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step_count": self.step_count,
            "skipped": self.skipped,
            "m": [t.clone() for t in self.m],
            "v": [t.clone() for t in self.v],
        }

    def load_state_dict(self, state: dict):
        self.lr = state["lr"]
        self.beta1 = state["beta1"]
        self.beta2 = state["beta2"]
        self.eps = state["eps"]
        self.step_count = state["step_count"]
        self.skipped = state["skipped"]
        for dst, src in zip(self.m, state["m"]):
            dst.copy_(src)
        for dst, src in zip(self.v, state["v"]):
            dst.copy_(src)
