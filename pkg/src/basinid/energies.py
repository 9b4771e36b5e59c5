"""Synthetic energy landscapes: values and exact analytic gradients.

All energies accept a single state (D,) or a batch (m, D) and are
implemented with row-invariant operations only (see :mod:`basinid.core`),
so they can drive batched samplers without changing per-trajectory results.

Conventions: Gaussian mixtures include their full normalization constants,
so a single standard Gaussian has U(mode) = d/2 * log(2*pi). Ring and helix
energies are negative logs of unnormalized mixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import generator

_TAU = 2.0 * np.pi


def _as_batch(x, dim: int):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"state has dimension {x.shape[0]}, energy expects {dim}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"states have shape {x.shape}, energy expects (m, {dim})")
    return x, False


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1)
    return m + np.log(np.sum(np.exp(logits - m[..., None]), axis=-1))


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / np.sum(e, axis=-1, keepdims=True)


class Energy:
    """Scalar potential with exact gradient; immutable after construction."""

    dim: int

    def value(self, x: np.ndarray) -> np.ndarray | float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_and_gradient(self, x: np.ndarray):
        """Fused evaluation; subclasses override to share intermediate terms."""
        return self.value(x), self.gradient(x)


class DoubleRing(Energy):
    """Two concentric Gaussian rings: U = -log sum_k exp(-(|x|-r_k)^2 / 2s^2)."""

    def __init__(self, r1: float = 1.0, r2: float = 3.0, sigma: float = 0.1, dim: int = 2):
        if sigma <= 0 or r1 <= 0 or r2 <= 0:
            raise ValueError("radii and sigma must be positive")
        self.r1 = float(r1)
        self.r2 = float(r2)
        self.sigma = float(sigma)
        self.dim = int(dim)
        self.radii = np.array([self.r1, self.r2])

    def _logits(self, r: np.ndarray) -> np.ndarray:
        return -((r[..., None] - self.radii) ** 2) / (2.0 * self.sigma**2)

    def value(self, x):
        xb, single = _as_batch(x, self.dim)
        r = np.sqrt(np.sum(xb * xb, axis=-1))
        u = -_logsumexp(self._logits(r))
        return float(u[0]) if single else u

    def gradient(self, x):
        xb, single = _as_batch(x, self.dim)
        g = self._grad_batch(xb)
        return g[0] if single else g

    def _grad_batch(self, xb):
        r = np.sqrt(np.sum(xb * xb, axis=-1))
        w = _softmax(self._logits(r))
        radial = np.sum(w * (r[..., None] - self.radii), axis=-1) / self.sigma**2
        safe_r = np.where(r > 0.0, r, 1.0)
        g = (radial / safe_r)[..., None] * xb
        return np.where(r[..., None] > 0.0, g, 0.0)  # cusp at the origin

    def value_and_gradient(self, x):
        xb, single = _as_batch(x, self.dim)
        u = -_logsumexp(self._logits(np.sqrt(np.sum(xb * xb, axis=-1))))
        g = self._grad_batch(xb)
        return (float(u[0]), g[0]) if single else (u, g)


class GaussianMixture(Energy):
    """U = -log sum_j w_j N(x; mu_j, s_j^2 I), with full normalization."""

    def __init__(self, means: np.ndarray, sigma, weights=None):
        means = np.asarray(means, dtype=np.float64)
        if means.ndim != 2:
            raise ValueError("means must be (K, dim)")
        self.means = means
        self.dim = means.shape[1]
        k = means.shape[0]
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (k,)).copy()
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")
        if weights is None:
            weights = np.full(k, 1.0 / k)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (k,) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per component")
        self.weights = self.weights / np.sum(self.weights)
        self._mean_sq = np.sum(means * means, axis=-1)
        self._log_norm = np.log(self.weights) - 0.5 * self.dim * np.log(_TAU * self.sigma**2)

    def _logits(self, xb: np.ndarray) -> np.ndarray:
        cross = np.einsum("md,kd->mk", xb, self.means)
        sq = np.sum(xb * xb, axis=-1)
        d2 = sq[:, None] - 2.0 * cross + self._mean_sq[None, :]
        return self._log_norm[None, :] - d2 / (2.0 * self.sigma**2)[None, :]

    def value(self, x):
        xb, single = _as_batch(x, self.dim)
        u = -_logsumexp(self._logits(xb))
        return float(u[0]) if single else u

    def gradient(self, x):
        xb, single = _as_batch(x, self.dim)
        g = self._grad_from_logits(xb, self._logits(xb))
        return g[0] if single else g

    def _grad_from_logits(self, xb, logits):
        inv_var = _softmax(logits) / (self.sigma**2)[None, :]
        return xb * np.sum(inv_var, axis=-1, keepdims=True) - np.einsum("mk,kd->md", inv_var, self.means)

    def value_and_gradient(self, x):
        xb, single = _as_batch(x, self.dim)
        logits = self._logits(xb)
        u = -_logsumexp(logits)
        g = self._grad_from_logits(xb, logits)
        return (float(u[0]), g[0]) if single else (u, g)


class Helix(Energy):
    """Two helical Gaussian tubes wrapping around each other, plus four
    Gaussian bumps at the tube ends.

    Tube centers: c(s) = (±a cos s, ±a sin s, b s) for s in [0, 4*pi],
    discretized into ``grid_points`` samples. Tube energy is the squared
    distance to the nearest discretized curve point over 2*sigma_tube^2;
    the six terms combine through -log-sum-exp. The gradient follows the
    nearest curve point, exact away from the (measure-zero) equidistance
    sets between grid points.
    """

    def __init__(
        self,
        a: float = 1.0,
        b: float = 1.0,
        sigma_tube: float = 0.2,
        sigma_end: float = 0.25,
        grid_points: int = 400,
    ):
        self.a = float(a)
        self.b = float(b)
        self.sigma_tube = float(sigma_tube)
        self.sigma_end = float(sigma_end)
        self.dim = 3
        s = np.linspace(0.0, 2.0 * _TAU, int(grid_points))
        plus = np.stack([a * np.cos(s), a * np.sin(s), b * s], axis=1)
        minus = np.stack([-a * np.cos(s), -a * np.sin(s), b * s], axis=1)
        self.curves = np.stack([plus, minus])  # (2, G, 3)
        self.endpoints = np.stack([plus[0], plus[-1], minus[0], minus[-1]])
        self._curve_sq = np.sum(self.curves * self.curves, axis=-1)  # (2, G)
        self._end_sq = np.sum(self.endpoints * self.endpoints, axis=-1)

    def _tube_terms(self, xb: np.ndarray):
        sq = np.sum(xb * xb, axis=-1)  # (m,)
        d2 = np.empty((xb.shape[0], 2))
        nearest = np.empty((xb.shape[0], 2, 3))
        for t in range(2):
            cross = np.einsum("md,gd->mg", xb, self.curves[t])
            dist = sq[:, None] - 2.0 * cross + self._curve_sq[t][None, :]
            idx = np.argmin(dist, axis=-1)
            d2[:, t] = dist[np.arange(xb.shape[0]), idx]
            nearest[:, t] = self.curves[t][idx]
        cross_e = np.einsum("md,ed->me", xb, self.endpoints)
        d2_end = sq[:, None] - 2.0 * cross_e + self._end_sq[None, :]
        return d2, nearest, d2_end

    def value(self, x):
        xb, single = _as_batch(x, self.dim)
        d2, _, d2_end = self._tube_terms(xb)
        u = -_logsumexp(self._logits_from_terms(d2, d2_end))
        return float(u[0]) if single else u

    def gradient(self, x):
        xb, single = _as_batch(x, self.dim)
        g = self._grad_from_terms(xb, *self._tube_terms(xb))
        return g[0] if single else g

    def _logits_from_terms(self, d2, d2_end):
        return np.concatenate(
            [-d2 / (2.0 * self.sigma_tube**2), -d2_end / (2.0 * self.sigma_end**2)], axis=1
        )

    def _grad_from_terms(self, xb, d2, nearest, d2_end):
        w = _softmax(self._logits_from_terms(d2, d2_end))
        g = np.zeros_like(xb)
        for t in range(2):
            g += w[:, t : t + 1] * (xb - nearest[:, t]) / self.sigma_tube**2
        for e in range(4):
            g += w[:, 2 + e : 3 + e] * (xb - self.endpoints[e]) / self.sigma_end**2
        return g

    def value_and_gradient(self, x):
        xb, single = _as_batch(x, self.dim)
        d2, nearest, d2_end = self._tube_terms(xb)
        u = -_logsumexp(self._logits_from_terms(d2, d2_end))
        g = self._grad_from_terms(xb, d2, nearest, d2_end)
        return (float(u[0]), g[0]) if single else (u, g)

    def tube_distances(self, x) -> np.ndarray:
        """Squared distance of each state to each tube's nearest grid point (m, 2)."""
        xb, single = _as_batch(x, self.dim)
        d2, _, _ = self._tube_terms(xb)
        return d2[0] if single else d2


@dataclass(frozen=True)
class LinearEmbedding:
    """Orthonormal basis of a k-dim structured subspace inside ambient R^D."""

    basis: np.ndarray  # (ambient_dim, k), orthonormal columns
    orthogonal_sigma: float
    seed: int

    def __post_init__(self):
        b = self.basis
        if b.ndim != 2 or b.shape[0] < b.shape[1]:
            raise ValueError("basis must be (ambient_dim, k) with ambient_dim >= k")
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-10):
            raise ValueError("basis columns are not orthonormal to 1e-10")
        if self.orthogonal_sigma <= 0:
            raise ValueError("orthogonal_sigma must be positive")

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    def project(self, x) -> np.ndarray:
        """Coordinates in the structured subspace: B^T x."""
        xb = np.asarray(x, dtype=np.float64)
        if xb.ndim == 1:
            return np.einsum("d,dk->k", xb, self.basis)
        return np.einsum("md,dk->mk", xb, self.basis)


def random_embedding(ambient_dim: int, k: int, orthogonal_sigma: float, seed: int) -> LinearEmbedding:
    """QR-orthonormalized seeded Gaussian basis: a random k-dim subspace."""
    raw = generator(seed).standard_normal((ambient_dim, k))
    q, _ = np.linalg.qr(raw)
    return LinearEmbedding(basis=q[:, :k].copy(), orthogonal_sigma=float(orthogonal_sigma), seed=seed)


class AugmentedEnergy(Energy):
    """Low-dimensional energy on a linear subspace plus isotropic Gaussian
    energy on the orthogonal complement:

        U(z) = U_low(B^T z) + |z - B B^T z|^2 / (2 sigma_perp^2)
    """

    def __init__(self, low: Energy, embedding: LinearEmbedding):
        if low.dim != embedding.k:
            raise ValueError(
                f"low-dimensional energy has dim {low.dim}, embedding spans {embedding.k}"
            )
        self.low = low
        self.embedding = embedding
        self.dim = embedding.ambient_dim
        self._var_perp = embedding.orthogonal_sigma**2

    def _split(self, zb: np.ndarray):
        u = np.einsum("md,dk->mk", zb, self.embedding.basis)
        resid = zb - np.einsum("mk,dk->md", u, self.embedding.basis)
        return u, resid

    def value(self, z):
        zb, single = _as_batch(z, self.dim)
        u, resid = self._split(zb)
        val = self.low.value(u) + np.sum(resid * resid, axis=-1) / (2.0 * self._var_perp)
        return float(val[0]) if single else val

    def gradient(self, z):
        zb, single = _as_batch(z, self.dim)
        u, resid = self._split(zb)
        glow = self.low.gradient(u)
        g = np.einsum("mk,dk->md", glow, self.embedding.basis) + resid / self._var_perp
        return g[0] if single else g

    def value_and_gradient(self, z):
        zb, single = _as_batch(z, self.dim)
        u, resid = self._split(zb)
        val_low, glow = self.low.value_and_gradient(u)
        val = val_low + np.sum(resid * resid, axis=-1) / (2.0 * self._var_perp)
        g = np.einsum("mk,dk->md", glow, self.embedding.basis) + resid / self._var_perp
        return (float(val[0]), g[0]) if single else (val, g)


class ScaledEnergy(Energy):
    """U / divisor; used for tempering identities."""

    def __init__(self, base: Energy, divisor: float):
        if divisor <= 0:
            raise ValueError("divisor must be positive")
        self.base = base
        self.divisor = float(divisor)
        self.dim = base.dim

    def value(self, x):
        return self.base.value(x) / self.divisor

    def gradient(self, x):
        return self.base.gradient(x) / self.divisor

    def value_and_gradient(self, x):
        val, g = self.base.value_and_gradient(x)
        return val / self.divisor, g / self.divisor


def make_isotropic_gmm(
    num_components: int,
    dim: int,
    radius: float = 10.0,
    component_sigma: float = 1.0,
    seed: int = 0,
    max_draws: int = 1000,
) -> GaussianMixture:
    """Equal-weight isotropic mixture with means uniform on the radius sphere.

    The whole mean set is re-drawn until the minimum pairwise distance is at
    least 4 * component_sigma, so components stay well separated.
    """
    if num_components < 1 or dim < 1 or radius <= 0:
        raise ValueError("need num_components >= 1, dim >= 1, radius > 0")
    rng = generator(seed)
    for _ in range(max_draws):
        raw = rng.standard_normal((num_components, dim))
        means = radius * raw / np.linalg.norm(raw, axis=1, keepdims=True)
        if num_components == 1:
            break
        diff = means[:, None, :] - means[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(d, np.inf)
        if d.min() >= 4.0 * component_sigma:
            break
    else:
        raise ValueError("could not place components with the required separation")
    return GaussianMixture(means=means, sigma=component_sigma)


def make_gaussian_mixture_2d(
    num_components: int = 3,
    spread: float = 4.0,
    component_sigma: float = 0.5,
    seed: int = 0,
    min_sep_sigmas: float = 10.0,
    max_draws: int = 1000,
) -> GaussianMixture:
    """Random 2-d mixture; locations are fixed per seed so low- and
    high-dimensional experiments share the same planar structure. Separation
    of 10 sigma keeps cross-component MALA hops negligible."""
    rng = generator(seed)
    for _ in range(max_draws):
        means = spread * rng.standard_normal((num_components, 2))
        if num_components == 1:
            break
        diff = means[:, None, :] - means[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(d, np.inf)
        if d.min() >= min_sep_sigmas * component_sigma:
            break
    else:
        raise ValueError("could not place components with the required separation")
    return GaussianMixture(means=means, sigma=component_sigma)


# --- JSON config schema ----------------------------------------------------


def energy_from_spec(spec: dict) -> Energy:
    """Build an energy from its JSON manifest record."""
    kind = spec.get("kind")
    if kind == "double-ring":
        return DoubleRing(
            r1=spec.get("r1", 1.0),
            r2=spec.get("r2", 3.0),
            sigma=spec.get("sigma", 0.1),
            dim=spec.get("dim", 2),
        )
    if kind == "gaussian-mixture":
        return GaussianMixture(
            means=np.asarray(spec["means"], dtype=np.float64),
            sigma=spec.get("sigma", 1.0),
            weights=spec.get("weights"),
        )
    if kind == "gaussian-mixture-2d":
        return make_gaussian_mixture_2d(
            num_components=spec.get("num_components", 3),
            spread=spec.get("spread", 4.0),
            component_sigma=spec.get("sigma", 0.5),
            seed=spec["seed"],
        )
    if kind == "isotropic-gmm":
        return make_isotropic_gmm(
            num_components=spec["num_components"],
            dim=spec["dim"],
            radius=spec.get("radius", 10.0),
            component_sigma=spec.get("sigma", 1.0),
            seed=spec["seed"],
        )
    if kind == "helix":
        return Helix(
            a=spec.get("a", 1.0),
            b=spec.get("b", 0.5),
            sigma_tube=spec.get("sigma_tube", 0.25),
            sigma_end=spec.get("sigma_end", 0.3),
            grid_points=spec.get("grid_points", 400),
        )
    raise ValueError(f"unknown energy kind {kind!r}")


def augment_energy(low: Energy, embedding: LinearEmbedding) -> AugmentedEnergy:
    return AugmentedEnergy(low, embedding)
