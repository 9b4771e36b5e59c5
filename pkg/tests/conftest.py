"""Shared test kernels and oracles."""

from __future__ import annotations

import numpy as np
import pytest

from basinid.core import MarkovKernel


class IdentityKernel(MarkovKernel):
    """step(x) = x; consumes no noise."""

    def __init__(self, dim: int):
        self.dim = dim

    def step_batch(self, x, gauss, unif):
        return x


class ShiftKernel(MarkovKernel):
    """Deterministic drift x -> x + shift."""

    def __init__(self, dim: int, shift: float = 1.0):
        self.dim = dim
        self.shift = shift

    def step_batch(self, x, gauss, unif):
        return x + self.shift


class NoisyContractionKernel(MarkovKernel):
    """Contracts toward the nearest of two fixed points; disjoint basins."""

    def __init__(self, center: float = 3.0, rate: float = 0.2, noise: float = 0.1):
        self.dim = 1
        self.gauss_per_step = 1
        self.center = center
        self.rate = rate
        self.noise = noise

    def step_batch(self, x, gauss, unif):
        target = np.where(x >= 0.0, self.center, -self.center)
        return x + self.rate * (target - x) + self.noise * gauss


class ExplodingKernel(MarkovKernel):
    """Overflows to +-inf after a few steps; exercises divergence errors."""

    def __init__(self, dim: int = 1):
        self.dim = dim

    def step_batch(self, x, gauss, unif):
        return x * 1e60 + 1e60


def finite_difference_gradient(f, x, h=1e-5):
    """Central-difference gradient oracle for a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
