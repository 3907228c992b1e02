"""Diagonal Gaussian components and their finite mixtures.

Every function accepts a single point ``z`` of shape ``(d,)`` or a batch of
points of shape ``(n, d)`` and returns correspondingly shaped output.

Shapes used throughout:

    means:       (K, d)   component means
    precisions:  (K, d)   component precisions s = 1 / sigma^2
    weights:     (K,)     simplex weights
    z:           (d,) or (n, d)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianParticle:
    """Variational parameters of one diagonal Gaussian: mean and precision."""

    mu: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        if mu.ndim != 1 or mu.shape != s.shape:
            raise ValueError(f"mu and s must be vectors of equal length, got {mu.shape} and {s.shape}")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("precision s must be strictly positive and finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "s", s)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    @property
    def variance(self) -> np.ndarray:
        return 1.0 / self.s

    def natural_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Natural parameters ``(s * mu, -s / 2)``."""
        return self.s * self.mu, -0.5 * self.s

    def expectation_params(self) -> tuple[np.ndarray, np.ndarray]:
        """Expectation parameters ``(mu, mu**2 + 1 / s)``."""
        return self.mu, self.mu**2 + 1.0 / self.s


class ParticleMixture:
    """K weighted Gaussian particles, i.e. a diagonal Gaussian mixture.

    Parameters are stored as stacked arrays; ``particles`` gives the
    per-component view.
    """

    def __init__(self, means, precisions, weights=None):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        precisions = np.asarray(precisions, dtype=float)
        if precisions.ndim == 0:
            precisions = np.full_like(means, float(precisions))
        precisions = np.atleast_2d(precisions)
        if means.shape != precisions.shape:
            raise ValueError(f"means {means.shape} and precisions {precisions.shape} differ in shape")
        K = means.shape[0]
        if K < 1:
            raise ValueError("a mixture needs at least one particle")
        if weights is None:
            weights = np.full(K, 1.0 / K)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape != (K,):
            raise ValueError(f"expected {K} weights, got {weights.shape[0]}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be nonnegative and finite")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (sum is {weights.sum()!r})")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        if not np.all(np.isfinite(precisions)) or np.any(precisions <= 0):
            raise ValueError("precisions must be strictly positive and finite")
        self.means = means
        self.precisions = precisions
        self.weights = weights

    @classmethod
    def from_particles(cls, particles, weights=None) -> "ParticleMixture":
        particles = list(particles)
        if not particles:
            raise ValueError("a mixture needs at least one particle")
        dims = {p.dim for p in particles}
        if len(dims) != 1:
            raise ValueError(f"particles have mixed dimensions {sorted(dims)}")
        return cls(
            np.stack([p.mu for p in particles]),
            np.stack([p.s for p in particles]),
            weights,
        )

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def particles(self) -> list[GaussianParticle]:
        return [GaussianParticle(m, s) for m, s in zip(self.means, self.precisions)]

    def particle(self, k: int) -> GaussianParticle:
        return GaussianParticle(self.means[k], self.precisions[k])

    def replace(self, means=None, precisions=None, weights=None) -> "ParticleMixture":
        return ParticleMixture(
            self.means if means is None else means,
            self.precisions if precisions is None else precisions,
            self.weights if weights is None else weights,
        )

    def copy(self) -> "ParticleMixture":
        return ParticleMixture(self.means.copy(), self.precisions.copy(), self.weights.copy())

    def __repr__(self):
        return f"ParticleMixture(K={self.K}, dim={self.dim})"


def _as_batch(z, dim):
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.ndim != 2 or z2.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {z.shape}")
    return z2, single


def _component_log_densities(means, precisions, z2):
    # (n, K)
    diff = z2[:, None, :] - means[None, :, :]
    return 0.5 * (
        np.sum(np.log(precisions), axis=-1)[None, :]
        - np.sum(precisions[None] * diff**2, axis=-1)
        - means.shape[1] * LOG_2PI
    )


def component_log_density(p: GaussianParticle, z) -> np.ndarray | float:
    """log N(z | mu, diag(1/s))."""
    z2, single = _as_batch(z, p.dim)
    out = _component_log_densities(p.mu[None], p.s[None], z2)[:, 0]
    return float(out[0]) if single else out


def component_log_densities(m: ParticleMixture, z) -> np.ndarray:
    """Per-component log densities, shape ``(K,)`` or ``(n, K)``."""
    z2, single = _as_batch(z, m.dim)
    out = _component_log_densities(m.means, m.precisions, z2)
    return out[0] if single else out


def _log_parts(m, z2):
    log_qk = _component_log_densities(m.means, m.precisions, z2)
    with np.errstate(divide="ignore"):
        log_a = np.log(m.weights)
    log_qn = logsumexp(log_qk + log_a[None], axis=1)
    if not np.all(np.isfinite(log_qn)):
        raise FloatingPointError("mixture density is zero or non-finite at an evaluation point")
    return log_qk, log_a, log_qn


def mixture_log_density(m: ParticleMixture, z) -> np.ndarray | float:
    """log sum_k a_k q(z | lambda_k) via max-shifted log-sum-exp."""
    z2, single = _as_batch(z, m.dim)
    _, _, log_qn = _log_parts(m, z2)
    return float(log_qn[0]) if single else log_qn


def responsibilities(m: ParticleMixture, z) -> np.ndarray:
    """Density ratios ``w_k = q(z | lambda_k) / q_n(z)``.

    These are not multiplied by the weights, so ``sum_k a_k w_k = 1``.
    """
    z2, single = _as_batch(z, m.dim)
    log_qk, _, log_qn = _log_parts(m, z2)
    w = np.exp(log_qk - log_qn[:, None])
    return w[0] if single else w


def _posterior_terms(m, z2):
    log_qk, log_a, log_qn = _log_parts(m, z2)
    r = np.exp(log_qk + log_a[None] - log_qn[:, None])  # (n, K), rows sum to 1
    comp_score = -m.precisions[None] * (z2[:, None, :] - m.means[None])  # (n, K, d)
    score = np.einsum("nk,nkd->nd", r, comp_score)
    return r, comp_score, score


def mixture_score(m: ParticleMixture, z) -> np.ndarray:
    """Gradient of log q_n with respect to z."""
    z2, single = _as_batch(z, m.dim)
    _, _, score = _posterior_terms(m, z2)
    return score[0] if single else score


def mixture_hess_diag(m: ParticleMixture, z) -> np.ndarray:
    """Diagonal of the Hessian of log q_n with respect to z."""
    z2, single = _as_batch(z, m.dim)
    r, comp_score, score = _posterior_terms(m, z2)
    second = np.einsum("nk,nkd->nd", r, comp_score**2 - m.precisions[None])
    hess = second - score**2
    return hess[0] if single else hess


def score_and_hess_diag(m: ParticleMixture, z) -> tuple[np.ndarray, np.ndarray]:
    """Both ``mixture_score`` and ``mixture_hess_diag`` from one pass."""
    z2, single = _as_batch(z, m.dim)
    r, comp_score, score = _posterior_terms(m, z2)
    hess = np.einsum("nk,nkd->nd", r, comp_score**2 - m.precisions[None]) - score**2
    if single:
        return score[0], hess[0]
    return score, hess


def component_param_grads(p: GaussianParticle, z) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of log q(z | mu, s) with respect to mu and s."""
    z2, single = _as_batch(z, p.dim)
    diff = z2 - p.mu[None]
    grad_mu = p.s[None] * diff
    grad_s = 0.5 / p.s[None] - 0.5 * diff**2
    if single:
        return grad_mu[0], grad_s[0]
    return grad_mu, grad_s


def sample_component(p: GaussianParticle, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from N(mu, diag(1/s)); shape ``(d,)`` or ``(size, d)``."""
    shape = (p.dim,) if size is None else (size, p.dim)
    return p.mu + rng.standard_normal(shape) / np.sqrt(p.s)


def sample_mixture(m: ParticleMixture, rng: np.random.Generator, size: int | None = None,
                   return_labels: bool = False):
    """Draw a component label from the weights, then a point from that component."""
    n = 1 if size is None else size
    labels = rng.choice(m.K, size=n, p=m.weights)
    eps = rng.standard_normal((n, m.dim))
    z = m.means[labels] + eps / np.sqrt(m.precisions[labels])
    if size is None:
        z, labels = z[0], labels[0]
    return (z, labels) if return_labels else z
