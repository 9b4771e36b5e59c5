"""Concrete Markov kernels: MALA over an energy, and online spherical SGD
for phase retrieval.

Noise consumption per step (see the stream contract in :mod:`basinid.rng`):

* MALA: ``dim`` Gaussians (the proposal noise), then one uniform (the
  accept decision).
* Phase retrieval: ``dim + 1`` Gaussians (the sensing vector, then the
  observation noise); no uniforms.
"""

from __future__ import annotations

import numpy as np

from .core import MarkovKernel
from .energies import Energy, energy_from_spec, random_embedding, augment_energy
from .rng import generator


class MalaKernel(MarkovKernel):
    """Metropolis-adjusted Langevin kernel targeting exp(-U/temperature).

    Proposal: x' = x - eta * grad U(x) / temp + sqrt(2 eta) * xi with
    xi ~ N(0, I); accepted with probability
    min(1, exp(-(U(x') - U(x))/temp + log q(x|x') - log q(x'|x))).
    A rejected step returns x unchanged and consumes the same noise.
    """

    unif_per_step = 1

    def __init__(self, energy: Energy, step_size: float, temperature: float = 1.0):
        if step_size <= 0:
            raise ValueError("step_size must be positive")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.energy = energy
        self.step_size = float(step_size)
        self.temperature = float(temperature)
        self.dim = energy.dim
        self.gauss_per_step = energy.dim

    def _val_grad(self, x):
        val, grad = self.energy.value_and_gradient(x)
        return np.asarray(val) / self.temperature, grad / self.temperature

    def init_carry(self, x):
        return self._val_grad(x)

    def step_batch_carry(self, x, carry, gauss, unif):
        x2, _, _, carry2 = self._propose(x, carry, gauss, unif)
        return x2, carry2

    def step_batch(self, x, gauss, unif):
        return self.step_batch_carry(x, self.init_carry(x), gauss, unif)[0]

    def step_batch_detailed(self, x, gauss, unif):
        """Like step_batch, also returning the accept mask and log alpha."""
        x2, accepted, log_alpha, _ = self._propose(x, self.init_carry(x), gauss, unif)
        return x2, accepted, log_alpha

    def _propose(self, x, carry, gauss, unif):
        eta = self.step_size
        val_x, grad_x = carry
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            drift = x - eta * grad_x
            prop = drift + np.sqrt(2.0 * eta) * gauss
            val_p, grad_p = self._val_grad(prop)
            fwd = prop - drift                      # = sqrt(2 eta) * xi
            rev = x - (prop - eta * grad_p)
            log_alpha = (val_x - val_p) + (
                np.sum(fwd * fwd, axis=-1) - np.sum(rev * rev, axis=-1)
            ) / (4.0 * eta)
            accepted = unif[:, 0] < np.exp(np.minimum(log_alpha, 0.0))
            mask = accepted[:, None]
            x2 = np.where(mask, prop, x)
            # non-finite proposals are divergence, not rejections; poison the
            # state so the simulator reports the step and trajectory
            diverged = ~np.isfinite(prop).all(axis=-1)
            if diverged.any():
                x2 = np.where(diverged[:, None], np.nan, x2)
            carry2 = (np.where(accepted, val_p, val_x), np.where(mask, grad_p, grad_x))
        return x2, accepted, log_alpha, carry2


class PhaseRetrievalKernel(MarkovKernel):
    """One online spherical-SGD step for noisy quadratic measurements.

    Each step draws a fresh sensing vector a ~ N(0, I_d) and observation
    y = (a . truth)^2 + noise, takes the Euclidean gradient of
    ((a . x)^2 - y)^2, projects it to the tangent space of the unit sphere,
    and retracts by normalization.
    """

    unif_per_step = 0

    def __init__(self, truth: np.ndarray, learning_rate: float, noise_sigma: float = 0.0):
        truth = np.asarray(truth, dtype=np.float64)
        if truth.ndim != 1:
            raise ValueError("truth must be a vector")
        if abs(np.linalg.norm(truth) - 1.0) > 1e-12:
            raise ValueError("truth must be a unit vector to 1e-12")
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        self.truth = truth
        self.learning_rate = float(learning_rate)
        self.noise_sigma = float(noise_sigma)
        self.dim = truth.shape[0]
        self.gauss_per_step = self.dim + 1

    def step_batch(self, x, gauss, unif):
        a = gauss[:, : self.dim]
        eps = self.noise_sigma * gauss[:, self.dim]
        a_truth = np.sum(a * self.truth, axis=-1)
        y = a_truth * a_truth + eps
        ax = np.sum(a * x, axis=-1)
        g = (4.0 * (ax * ax - y) * ax)[:, None] * a
        tangent = g - np.sum(x * g, axis=-1)[:, None] * x
        z = x - self.learning_rate * tangent
        norm = np.sqrt(np.sum(z * z, axis=-1))
        # a vanishing norm cannot be renormalized; surface it as divergence
        return np.where((norm >= 1e-12)[:, None], z / np.where(norm > 0, norm, 1.0)[:, None], np.nan)


def random_unit_vector(dim: int, seed: int) -> np.ndarray:
    v = generator(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def kernel_from_spec(spec: dict) -> MarkovKernel:
    """Build a kernel from its JSON manifest record (registry by kind)."""
    kind = spec.get("kind")
    if kind == "mala":
        energy = energy_from_spec(spec["energy"])
        emb = spec.get("embedding")
        if emb:
            embedding = random_embedding(
                ambient_dim=emb["ambient_dim"],
                k=energy.dim,
                orthogonal_sigma=emb.get("orthogonal_sigma", 1.0),
                seed=emb["seed"],
            )
            energy = augment_energy(energy, embedding)
        return MalaKernel(
            energy=energy,
            step_size=spec["step_size"],
            temperature=spec.get("temperature", 1.0),
        )
    if kind == "phase-retrieval":
        truth = spec.get("truth")
        if truth is None:
            truth = random_unit_vector(spec["dim"], spec["truth_seed"])
        return PhaseRetrievalKernel(
            truth=np.asarray(truth, dtype=np.float64),
            learning_rate=spec["learning_rate"],
            noise_sigma=spec.get("noise_sigma", 0.0),
        )
    raise ValueError(f"unknown kernel kind {kind!r}")
