import math

import numpy as np
import pytest
import torch

from copfama.geometry import build_geometry
from copfama.marginal import (
    MarginalFlowBank,
    U_EPS,
    _SOFTPLUS_INV_1,
    train_marginals,
)

from oracles import normal_cdf, trapezoid_integral

_LOG_2PI = math.log(2 * math.pi)


@pytest.fixture(scope="module")
def bank():
    return MarginalFlowBank(build_geometry(1, num_ports=4, aperture=1.0))


@pytest.fixture(scope="module")
def perturbed_bank():
    torch.manual_seed(0)
    b = MarginalFlowBank(build_geometry(1, num_ports=4, aperture=1.0))
    with torch.no_grad():
        for p in b.hyper[-1].parameters():
            p.add_(0.3 * torch.randn_like(p))
    return b


def test_identity_init_cdf_half(bank):
    for i in (0, 5, 23):
        assert float(bank.cdf(i, 0.0)) == pytest.approx(0.5, abs=1e-12)


def test_identity_init_matches_erf_oracle(bank):
    assert float(bank.cdf(0, 1.96)) == pytest.approx(normal_cdf(1.96), abs=1e-10)
    assert float(bank.cdf(3, -1.0)) == pytest.approx(normal_cdf(-1.0), abs=1e-10)


def test_identity_init_logpdf(bank):
    assert float(bank.logpdf(0, 0.0)) == pytest.approx(-0.5 * _LOG_2PI, abs=1e-12)


def test_affine_scaling_rule(bank):
    # a hand-built parameter row realizing T(x) = 2x: density of N(0, 1/4)
    params = torch.zeros(1, bank.params_per_coord, dtype=torch.float64)
    params[0, 0] = math.log(math.expm1(2.0)) - _SOFTPLUS_INV_1
    y, logdet = bank._transform(torch.zeros(1, dtype=torch.float64), params)
    assert float(y) == pytest.approx(0.0, abs=1e-12)
    logpdf0 = -0.5 * float(y) ** 2 - 0.5 * _LOG_2PI + float(logdet)
    assert logpdf0 == pytest.approx(-0.5 * _LOG_2PI + math.log(2.0), abs=1e-10)


def test_monotonicity(perturbed_bank):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        i = int(rng.integers(perturbed_bank.num_coords))
        x1, x2 = np.sort(rng.standard_normal(2) * 3)
        if x1 == x2:
            continue
        assert float(perturbed_bank.cdf(i, x1)) < float(perturbed_bank.cdf(i, x2))


def test_cdf_clamped_interior(perturbed_bank):
    u = perturbed_bank.cdf(0, 1e6)
    assert float(u) <= 1.0 - U_EPS
    u = perturbed_bank.cdf(0, -1e6)
    assert float(u) >= U_EPS


def test_cdf_rejects_nonfinite(bank):
    with pytest.raises(ValueError):
        bank.cdf(0, float("nan"))


def test_inverse_round_trip(perturbed_bank):
    rng = np.random.default_rng(1)
    for _ in range(200):
        i = int(rng.integers(perturbed_bank.num_coords))
        x = float(rng.standard_normal() * 2)
        u = perturbed_bank.cdf(i, x)
        back = float(perturbed_bank.inverse_cdf(i, float(u)))
        assert back == pytest.approx(x, abs=1e-6)


def test_inverse_examples(bank):
    assert float(bank.inverse_cdf(0, 0.5)) == pytest.approx(0.0, abs=1e-10)
    assert float(bank.inverse_cdf(0, 0.975)) == pytest.approx(1.959964, abs=1e-5)


def test_inverse_rejects_boundary(bank):
    for u in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            bank.inverse_cdf(0, u)


def test_density_normalizes(perturbed_bank):
    for i in (0, 7, 19):
        integral = trapezoid_integral(
            lambda xs: np.exp(perturbed_bank.logpdf(i, xs).detach().numpy()), -10.0, 10.0
        )
        assert integral == pytest.approx(1.0, abs=1e-3)


def test_logpdf_matches_cdf_derivative(perturbed_bank):
    rng = np.random.default_rng(2)
    step = 1e-5
    for _ in range(50):
        i = int(rng.integers(perturbed_bank.num_coords))
        x = float(rng.standard_normal())
        num = (float(perturbed_bank.cdf(i, x + step)) - float(perturbed_bank.cdf(i, x - step))) / (2 * step)
        ana = math.exp(float(perturbed_bank.logpdf(i, x)))
        assert num == pytest.approx(ana, rel=1e-4)


def test_batch_paths_agree(perturbed_bank):
    rng = np.random.default_rng(3)
    x = torch.as_tensor(rng.standard_normal((5, perturbed_bank.num_coords)))
    lp = perturbed_bank.logpdf_batch(x)
    u = perturbed_bank.cdf_batch(x)
    for i in (0, 11, 23):
        assert torch.allclose(lp[:, i], perturbed_bank.logpdf(i, x[:, i]), atol=1e-12)
        assert torch.allclose(u[:, i], perturbed_bank.cdf(i, x[:, i]), atol=1e-12)


class _GaussianStream:
    """Fake simulator emitting i.i.d. standard-normal coordinates."""

    def __init__(self, num_coords):
        self.num_coords = num_coords
        self.geometry = None

    def batch_flat(self, rng, size):
        return rng.standard_normal((size, self.num_coords))


def test_training_on_standard_normal():
    torch.manual_seed(1)
    bank = MarginalFlowBank(build_geometry(1, num_ports=2, aperture=0.5))
    stream = _GaussianStream(bank.num_coords)
    rng = np.random.default_rng(4)
    trajectory = train_marginals(bank, stream, epochs=2, batches_per_epoch=40,
                                 batch_size=32, lr=1e-3, rng=rng)
    entropy = 0.5 * math.log(2 * math.pi * math.e)
    assert trajectory[-1] == pytest.approx(entropy, abs=0.05)
    held = torch.as_tensor(stream.batch_flat(rng, 512))
    final_nll = float(-bank.logpdf_batch(held).mean())
    assert final_nll <= entropy + 0.05
