"""Independent numerical oracles used by the tests.

Everything here is deliberately written from first principles (power
series, finite differences, quadrature) rather than calling the same
library routines the package uses, so agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np


def j0_series(x: float, terms: int = 30) -> float:
    """Bessel J0 by its power series sum_m (-1)^m (x/2)^(2m) / (m!)^2."""
    acc = 0.0
    term = 1.0
    for m in range(terms):
        acc += term
        term *= -((x / 2.0) ** 2) / ((m + 1.0) ** 2)
    return acc


def erf_series(x: float, terms: int = 60) -> float:
    """erf by its Maclaurin series (accurate for |x| <~ 4 in double)."""
    acc = 0.0
    power = x
    fact = 1.0
    for n in range(terms):
        acc += power / (fact * (2 * n + 1))
        power *= -(x * x)
        fact *= n + 1
    return 2.0 / math.sqrt(math.pi) * acc


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + erf_series(x / math.sqrt(2.0)))


def q_function(x: float) -> float:
    return 1.0 - normal_cdf(x)


def central_difference(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Elementwise central finite-difference gradient of scalar fn."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def trapezoid_integral(fn, lo: float, hi: float, points: int = 10_000) -> float:
    xs = np.linspace(lo, hi, points)
    return float(np.trapz(fn(xs), xs))
