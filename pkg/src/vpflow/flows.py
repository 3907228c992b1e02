"""Particle updates over the variational-parameter space.

Each Gaussian particle ``(mu_k, s_k)`` moves along the gradient of the first
variation of the mixture objective, optionally preconditioned by the inverse
Fisher (natural-gradient flow). Particle weights move by an exponentiated
gradient step on the simplex.

All per-particle directions at iteration n are computed from the iteration-n
mixture before any particle moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp
from scipy.spatial.distance import pdist

from .mixture import GaussianParticle, ParticleMixture, _log_parts, score_and_hess_diag

ALGORITHMS = ("gflowvi", "ngflowvi", "bbvi", "ngvi", "svgd")
STABILIZERS = ("none", "log_mirror", "box_mirror")


class NegativePrecisionError(FloatingPointError):
    """A precision left the positive orthant during an unstabilized step."""

    def __init__(self, particle: int, coordinate: int, value: float):
        self.particle = particle
        self.coordinate = coordinate
        self.value = value
        super().__init__(
            f"negative precision: particle {particle}, coordinate {coordinate} became {value!r}"
        )


@dataclass(frozen=True)
class FlowConfig:
    algorithm: str = "gflowvi"
    eta: float = 1e-3
    iterations: int = 1000
    samples_per_particle: int = 1
    md_weights: bool = True
    stabilize: str = "log_mirror"
    box: tuple[float, float] | None = None
    fv_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.stabilize not in STABILIZERS:
            raise ValueError(f"unknown stabilize mode {self.stabilize!r}; expected one of {STABILIZERS}")
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.samples_per_particle < 1 or self.fv_samples < 1:
            raise ValueError("sample counts must be at least 1")
        if self.stabilize == "box_mirror":
            if self.box is None:
                raise ValueError("box_mirror needs box=(a, b)")
            a, b = self.box
            if not 0 < a < b:
                raise ValueError(f"box bounds must satisfy 0 < a < b, got {self.box}")
            object.__setattr__(self, "box", (float(a), float(b)))


@dataclass
class FlowState:
    mixture: ParticleMixture
    iteration: int = 0
    # svgd keeps bare points instead of Gaussian particles
    points: np.ndarray | None = field(default=None, repr=False)


def particle_rng(seed: int, iteration: int, k: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one particle at one iteration."""
    return np.random.default_rng([seed, iteration, k, stream])


# ---------------------------------------------------------------------------
# mirror maps


def mirror_map(lambda2, box: tuple[float, float] | None = None) -> np.ndarray:
    """Log map, or the logit-type map onto (a, b) when ``box`` is given."""
    x = np.asarray(lambda2, dtype=float)
    if box is None:
        if np.any(x <= 0):
            raise ValueError("log mirror map needs strictly positive input")
        return np.log(x)
    a, b = box
    if np.any(x <= a) or np.any(x >= b):
        raise ValueError(f"box mirror map needs input strictly inside ({a}, {b})")
    return np.log(x - a) - np.log(b - x)


def inverse_mirror_map(zeta, box: tuple[float, float] | None = None) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    if box is None:
        return np.exp(zeta)
    a, b = box
    # a + (b - a) * sigmoid(zeta) == (b e^zeta + a) / (e^zeta + 1), without overflow
    x = a + (b - a) * expit(zeta)
    return np.clip(x, np.nextafter(a, b), np.nextafter(b, a))


def _check_finite_update(*arrays):
    for a in arrays:
        bad = np.argwhere(~np.isfinite(a))
        if bad.size:
            k, i = (int(v) for v in bad[0])
            raise FloatingPointError(f"non-finite update: particle {k}, coordinate {i}")


def _apply_precision_step(s, direction, cfg: FlowConfig) -> np.ndarray:
    """Add ``direction`` to the precisions in primal or mirror coordinates."""
    _check_finite_update(direction)
    if cfg.stabilize == "box_mirror":
        return inverse_mirror_map(mirror_map(s, cfg.box) + direction, cfg.box)
    with np.errstate(over="ignore"):
        if cfg.stabilize == "log_mirror":
            s_new = inverse_mirror_map(mirror_map(s) + direction)
        else:
            s_new = s + direction
    _check_finite_update(s_new)
    bad = np.argwhere(~(s_new > 0))
    if bad.size:
        k, i = (int(v) for v in bad[0])
        if cfg.stabilize == "log_mirror":
            raise FloatingPointError(f"precision underflow: particle {k}, coordinate {i}")
        raise NegativePrecisionError(k, i, float(s_new[k, i]))
    return s_new


# ---------------------------------------------------------------------------
# first variation and weights


def _first_variations(m: ParticleMixture, target, z) -> np.ndarray:
    """Sample estimate of the first variation for each particle.

    ``z`` has shape ``(K, S, d)``, with ``z[k]`` drawn from particle k.
    """
    K, S, d = z.shape
    flat = z.reshape(-1, d)
    _, _, log_qn = _log_parts(m, flat)
    vals = np.asarray(target.value(flat)) + log_qn
    return vals.reshape(K, S).mean(axis=1) + 1.0


def first_variation(m: ParticleMixture, target, p: GaussianParticle, S: int,
                    rng: np.random.Generator) -> float:
    """Monte Carlo first variation of the objective at ``m``, evaluated at particle ``p``.

    Returns ``mean_i [f(z_i) + log q_n(z_i)] + 1`` with ``z_i ~ q(. | p)``.
    """
    if S < 1:
        raise ValueError("S must be at least 1")
    z = p.mu + rng.standard_normal((S, p.dim)) / np.sqrt(p.s)
    return float(_first_variations(m, target, z[None])[0])


def exponentiated_weights(weights, g, eta: float) -> np.ndarray:
    """``a_k exp(-eta g_k)`` normalized in log space."""
    with np.errstate(divide="ignore", over="ignore"):
        logits = np.log(weights) - eta * np.asarray(g, dtype=float)
    if not np.any(np.isfinite(logits)):
        # every particle got an infinite first variation; nothing to rank
        return np.asarray(weights, dtype=float).copy()
    logits = logits - logsumexp(logits)
    new = np.exp(logits)
    new /= new.sum()
    return new


def md_weight_update(m: ParticleMixture, target, eta: float, S: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Mirror-descent reweighting of particles that have already moved.

    ``m`` holds the new positions with the old weights.
    """
    if eta == 0:
        return m.weights.copy()
    eps = rng.standard_normal((m.K, S, m.dim))
    z = m.means[:, None, :] + eps / np.sqrt(m.precisions)[:, None, :]
    g = _first_variations(m, target, z)
    return exponentiated_weights(m.weights, g, eta)


# ---------------------------------------------------------------------------
# GFlowVI / NGFlowVI


@dataclass
class FlowDirections:
    """Sample-averaged pieces of the particle update, each of shape ``(K, d)``.

    mean_grad:   E[grad f + grad log q_n + w_k grad_mu log q_k]
    score_s:     E[w_k grad_s log q_k]
    hess:        E[diag(hess f + hess log q_n)]
    """

    mean_grad: np.ndarray
    score_s: np.ndarray
    hess: np.ndarray


def draw_particle_samples(m: ParticleMixture, S: int, seed: int, iteration: int) -> np.ndarray:
    """``(K, S, d)`` samples, particle k drawn from its own generator."""
    eps = np.stack([particle_rng(seed, iteration, k).standard_normal((S, m.dim)) for k in range(m.K)])
    return m.means[:, None, :] + eps / np.sqrt(m.precisions)[:, None, :]


def flow_directions(m: ParticleMixture, target, z) -> FlowDirections:
    """Evaluate the update pieces at samples ``z`` of shape ``(K, S, d)``."""
    K, S, d = z.shape
    flat = z.reshape(-1, d)
    grad_f, hess_f = target.grad_and_hess_diag(flat)
    score, hess_q = score_and_hess_diag(m, flat)
    log_qk, _, log_qn = _log_parts(m, flat)
    own = np.repeat(np.arange(K), S)
    with np.errstate(over="ignore"):
        w = np.exp(log_qk[np.arange(K * S), own] - log_qn)[:, None]  # (KS, 1)

    mu = m.means[own]
    s = m.precisions[own]
    diff = flat - mu
    grad_mu = s * diff
    grad_s = 0.5 / s - 0.5 * diff**2

    mean_grad = (np.asarray(grad_f) + score + w * grad_mu).reshape(K, S, d).mean(axis=1)
    score_s = (w * grad_s).reshape(K, S, d).mean(axis=1)
    hess = (np.asarray(hess_f) + hess_q).reshape(K, S, d).mean(axis=1)
    return FlowDirections(mean_grad, score_s, hess)


def gflowvi_update(m: ParticleMixture, target, z, cfg: FlowConfig) -> ParticleMixture:
    """Euclidean (identity-preconditioned) particle move, given samples ``z``."""
    eta = cfg.eta
    dirs = flow_directions(m, target, z)
    s = m.precisions
    mu_new = m.means - eta * dirs.mean_grad
    s_dir = -eta * dirs.score_s + 0.5 * eta / (s * s) * dirs.hess
    s_new = _apply_precision_step(s, s_dir, cfg)
    _check_finite_update(mu_new)
    return m.replace(means=mu_new, precisions=s_new)


def ngflowvi_update(m: ParticleMixture, target, z, cfg: FlowConfig) -> ParticleMixture:
    """Natural-gradient particle move, given samples ``z``.

    The precision is updated first; the mean step divides by the new precision.
    """
    eta = cfg.eta
    dirs = flow_directions(m, target, z)
    s = m.precisions
    s_dir = eta * dirs.hess - 2.0 * eta * (s * s) * dirs.score_s
    s_new = _apply_precision_step(s, s_dir, cfg)
    mu_new = m.means - eta * dirs.mean_grad / s_new
    _check_finite_update(mu_new)
    return m.replace(means=mu_new, precisions=s_new)


def _finish_step(state: FlowState, moved: ParticleMixture, target, cfg: FlowConfig) -> FlowState:
    if cfg.md_weights and moved.K > 1 and cfg.eta > 0:
        rng = particle_rng(cfg.seed, state.iteration, moved.K, stream=1)
        moved = moved.replace(weights=md_weight_update(moved, target, cfg.eta, cfg.fv_samples, rng))
    return FlowState(moved, state.iteration + 1)


def gflowvi_step(state: FlowState, target, cfg: FlowConfig) -> FlowState:
    m = state.mixture
    if cfg.eta == 0:
        return FlowState(m.copy(), state.iteration + 1)
    z = draw_particle_samples(m, cfg.samples_per_particle, cfg.seed, state.iteration)
    return _finish_step(state, gflowvi_update(m, target, z, cfg), target, cfg)


def ngflowvi_step(state: FlowState, target, cfg: FlowConfig) -> FlowState:
    m = state.mixture
    if cfg.eta == 0:
        return FlowState(m.copy(), state.iteration + 1)
    z = draw_particle_samples(m, cfg.samples_per_particle, cfg.seed, state.iteration)
    return _finish_step(state, ngflowvi_update(m, target, z, cfg), target, cfg)


# ---------------------------------------------------------------------------
# single-Gaussian baselines


def _require_single(m):
    if m.K != 1:
        raise ValueError(f"this baseline fits a single Gaussian, got K={m.K}")


def bbvi_update(m: ParticleMixture, target, eps, cfg: FlowConfig,
                sigma_floor: float = 1e-8) -> ParticleMixture:
    """Reparameterized gradient step in (mu, sigma) for noise ``eps`` of shape ``(S, d)``.

    With ``z = mu + sigma * eps`` the pathwise gradient of ``f(z) + log q(z)``
    is ``grad f(z)`` for mu and ``grad f(z) * eps - 1 / sigma`` for sigma.
    """
    _require_single(m)
    mu = m.means[0]
    sigma = 1.0 / np.sqrt(m.precisions[0])
    eps = np.atleast_2d(eps)
    z = mu + sigma * eps
    gf = np.atleast_2d(target.grad(z))
    g_mu = gf.mean(axis=0)
    g_sigma = (gf * eps).mean(axis=0) - 1.0 / sigma
    mu_new = mu - cfg.eta * g_mu
    sigma_new = sigma - cfg.eta * g_sigma
    if np.any(sigma_new <= 0):
        if cfg.stabilize == "none":
            i = int(np.argmax(sigma_new <= 0))
            raise NegativePrecisionError(0, i, float(sigma_new[i]))
        sigma_new = np.maximum(sigma_new, sigma_floor)
    return m.replace(means=mu_new[None], precisions=(1.0 / sigma_new**2)[None])


def bbvi_step(state: FlowState, target, cfg: FlowConfig) -> FlowState:
    m = state.mixture
    _require_single(m)
    eps = particle_rng(cfg.seed, state.iteration, 0).standard_normal((cfg.samples_per_particle, m.dim))
    return FlowState(bbvi_update(m, target, eps, cfg), state.iteration + 1)


def ngvi_update(m: ParticleMixture, target, z, cfg: FlowConfig) -> ParticleMixture:
    """Natural-gradient step for a diagonal Gaussian at samples ``z`` of shape ``(S, d)``."""
    _require_single(m)
    z = np.atleast_2d(z)
    gf, hf = target.grad_and_hess_diag(z)
    gf = np.atleast_2d(gf).mean(axis=0)
    hf = np.atleast_2d(hf).mean(axis=0)
    s = m.precisions
    s_new = _apply_precision_step(s, cfg.eta * (hf[None] - s), cfg)
    mu_new = m.means - cfg.eta * gf[None] / s_new
    return m.replace(means=mu_new, precisions=s_new)


def ngvi_step(state: FlowState, target, cfg: FlowConfig) -> FlowState:
    m = state.mixture
    _require_single(m)
    z = draw_particle_samples(m, cfg.samples_per_particle, cfg.seed, state.iteration)[0]
    return FlowState(ngvi_update(m, target, z, cfg), state.iteration + 1)


# ---------------------------------------------------------------------------
# SVGD


def rbf_median_bandwidth(x) -> float:
    """Median pairwise squared distance over log(M + 1)."""
    x = np.atleast_2d(x)
    M = x.shape[0]
    if M < 2:
        return 1.0
    med = np.median(pdist(x, "sqeuclidean"))
    if med <= 0:
        return 1.0
    return float(med / np.log(M + 1))


def svgd_direction(x, grad_logp, h: float | None = None) -> np.ndarray:
    """Stein direction ``(1/M) sum_j [k(x_j, x_i) grad log p(x_j) + grad_{x_j} k(x_j, x_i)]``."""
    x = np.atleast_2d(x)
    M = x.shape[0]
    if h is None:
        h = rbf_median_bandwidth(x)
    diff = x[:, None, :] - x[None, :, :]  # diff[j, i] = x_j - x_i
    kern = np.exp(-np.sum(diff**2, axis=-1) / h)
    drive = kern.T @ grad_logp
    repulse = -2.0 / h * np.einsum("ji,jid->id", kern, diff)
    return (drive + repulse) / M


def svgd_step(particles, target, cfg: FlowConfig) -> np.ndarray:
    x = np.atleast_2d(np.asarray(particles, dtype=float))
    if cfg.eta == 0:
        return x.copy()
    grad_logp = -np.atleast_2d(target.grad(x))
    return x + cfg.eta * svgd_direction(x, grad_logp)


# ---------------------------------------------------------------------------


_STEPS = {
    "gflowvi": gflowvi_step,
    "ngflowvi": ngflowvi_step,
    "bbvi": bbvi_step,
    "ngvi": ngvi_step,
}


def step(state: FlowState, target, cfg: FlowConfig) -> FlowState:
    """Dispatch one iteration of ``cfg.algorithm``."""
    if cfg.algorithm == "svgd":
        pts = svgd_step(state.points, target, cfg)
        return FlowState(state.mixture, state.iteration + 1, points=pts)
    return _STEPS[cfg.algorithm](state, target, cfg)


def run_flow(mixture: ParticleMixture, target, cfg: FlowConfig, callback=None) -> FlowState:
    """Run ``cfg.iterations`` steps; ``callback(state)`` sees every state including the first."""
    state = FlowState(mixture)
    if callback is not None:
        callback(state)
    for _ in range(cfg.iterations):
        state = step(state, target, cfg)
        if callback is not None:
            callback(state)
    return state


def with_overrides(cfg: FlowConfig, **kw) -> FlowConfig:
    return replace(cfg, **kw)
