"""Monte Carlo estimates of the objective, KL and predictive losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .mixture import ParticleMixture, mixture_log_density, sample_mixture
from .targets import BnnArch

DEFAULT_KL_SAMPLES = 10_000
DEFAULT_PREDICTION_SAMPLES = 100


@dataclass(frozen=True)
class MetricReport:
    n_samples: int
    std_error: float
    kl_estimate: float | None = None
    elbo_neg_estimate: float | None = None
    predictive_loss: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_and_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(values.mean()), se


def estimate_kl(q: ParticleMixture, target, n: int = DEFAULT_KL_SAMPLES,
                rng: np.random.Generator | None = None) -> MetricReport:
    """Plug-in estimate of KL(q || pi) from ``n`` samples of q."""
    if not getattr(target, "has_log_density", False):
        raise ValueError(f"{type(target).__name__} does not expose a normalized log density")
    rng = np.random.default_rng() if rng is None else rng
    z = sample_mixture(q, rng, size=n)
    vals = mixture_log_density(q, z) - np.asarray(target.log_density(z))
    mean, se = _mean_and_se(vals)
    return MetricReport(n_samples=n, std_error=se, kl_estimate=mean)


def estimate_negated_elbo(q: ParticleMixture, target, n: int = 1000,
                          rng: np.random.Generator | None = None) -> MetricReport:
    """Estimate of E_q[f(z) + log q(z)]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    z = sample_mixture(q, rng, size=n)
    vals = np.asarray(target.value(z)) + mixture_log_density(q, z)
    mean, se = _mean_and_se(vals)
    return MetricReport(n_samples=n, std_error=se, elbo_neg_estimate=mean)


def _draw_weights(q, n_weight_samples, rng):
    if isinstance(q, ParticleMixture):
        return sample_mixture(q, rng, size=n_weight_samples)
    # an array of equally weighted point particles (e.g. SVGD)
    return np.atleast_2d(np.asarray(q, dtype=float))


def predictive_loss(q, model_arch: BnnArch, X_test, y_test,
                    n_weight_samples: int = DEFAULT_PREDICTION_SAMPLES,
                    rng: np.random.Generator | None = None,
                    task: str = "regression") -> MetricReport:
    """Loss of the Bayesian model average on held-out data.

    Classification averages predicted probabilities over weight samples and
    reports the mean negative log-likelihood of labels in {-1, +1}.
    Regression averages outputs and reports the mean squared error.
    """
    rng = np.random.default_rng() if rng is None else rng
    dim = q.dim if isinstance(q, ParticleMixture) else np.atleast_2d(q).shape[1]
    if dim != model_arch.n_params:
        raise ValueError(f"q has dimension {dim} but the network has {model_arch.n_params} weights")
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    W = _draw_weights(q, n_weight_samples, rng)
    out = model_arch.forward(W, X_test)  # (n, B, o)
    if task == "classification":
        y = np.asarray(y_test, dtype=float).reshape(-1)
        p_pos = expit(out[..., 0]).mean(axis=0)
        p_true = np.where(y > 0, p_pos, 1.0 - p_pos)
        per_point = -np.log(np.clip(p_true, 1e-300, None))
    elif task == "regression":
        y = np.asarray(y_test, dtype=float).reshape(X_test.shape[0], -1)
        pred = out.mean(axis=0)
        per_point = np.mean((pred - y) ** 2, axis=1)
    else:
        raise ValueError(f"unknown task {task!r}")
    mean, se = _mean_and_se(per_point)
    return MetricReport(n_samples=W.shape[0], std_error=se, predictive_loss=mean)
