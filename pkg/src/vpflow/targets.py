"""Target models f(z) = -log pi(D, z) with gradients and diagonal Hessians.

All methods accept a single point of shape ``(d,)`` or a batch ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .mixture import (
    ParticleMixture,
    mixture_log_density,
    score_and_hess_diag,
)


class TargetModel:
    """Base class for negated log joints.

    Subclasses implement the batched ``_value``, ``_grad`` and ``_hess_diag``
    on arrays of shape ``(n, dim)``.
    """

    dim: int
    has_log_density = False

    def _batch(self, z):
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        z2 = np.atleast_2d(z)
        if z2.shape[-1] != self.dim:
            raise ValueError(f"target has dimension {self.dim}, got points of shape {z.shape}")
        return z2, single

    def value(self, z):
        z2, single = self._batch(z)
        out = self._value(z2)
        return float(out[0]) if single else out

    def grad(self, z):
        z2, single = self._batch(z)
        out = self._grad(z2)
        return out[0] if single else out

    def hess_diag(self, z):
        z2, single = self._batch(z)
        out = self._hess_diag(z2)
        return out[0] if single else out

    def grad_and_hess_diag(self, z):
        return self.grad(z), self.hess_diag(z)

    def log_density(self, z):
        raise NotImplementedError(f"{type(self).__name__} has no normalized log density")

    def set_batch(self, indices) -> None:
        """Restrict the data term to a minibatch; ``None`` restores the full data."""

    def _value(self, z2):
        raise NotImplementedError

    def _grad(self, z2):
        raise NotImplementedError

    def _hess_diag(self, z2):
        raise NotImplementedError


@dataclass(frozen=True)
class GmmTargetSpec:
    means: np.ndarray
    precisions: np.ndarray
    weights: np.ndarray


class GmmTarget(TargetModel):
    """Gaussian mixture target; f is the normalized negative log density."""

    has_log_density = True

    def __init__(self, spec: GmmTargetSpec):
        self.spec = spec
        self.mixture = ParticleMixture(spec.means, spec.precisions, spec.weights)
        self.dim = self.mixture.dim

    def log_density(self, z):
        return mixture_log_density(self.mixture, z)

    def _value(self, z2):
        return -mixture_log_density(self.mixture, z2)

    def _grad(self, z2):
        score, _ = score_and_hess_diag(self.mixture, z2)
        return -score

    def _hess_diag(self, z2):
        _, hess = score_and_hess_diag(self.mixture, z2)
        return -hess

    def grad_and_hess_diag(self, z):
        score, hess = score_and_hess_diag(self.mixture, z)
        return -score, -hess


def make_gmm_target(spec: GmmTargetSpec) -> GmmTarget:
    return GmmTarget(spec)


class _DataTarget(TargetModel):
    """Shared minibatch bookkeeping: the data term is scaled by N / |batch|."""

    def __init__(self, X, y):
        self.X = X
        self.y = y
        self.n_data = X.shape[0]
        self._idx = None

    def set_batch(self, indices) -> None:
        if indices is None:
            self._idx = None
            return
        idx = np.asarray(indices, dtype=int).reshape(-1)
        if idx.size == 0:
            raise ValueError("minibatch is empty")
        if idx.min() < 0 or idx.max() >= self.n_data:
            raise IndexError("minibatch index out of range")
        self._idx = idx

    def _active(self):
        if self._idx is None:
            return self.X, self.y, 1.0
        return self.X[self._idx], self.y[self._idx], self.n_data / self._idx.size


def _check_pm1(y):
    y = np.asarray(y, dtype=float).reshape(-1)
    bad = ~np.isin(y, (-1.0, 1.0))
    if np.any(bad):
        raise ValueError(f"labels must be -1 or +1, found {y[bad][0]!r}")
    return y


class LogisticRegressionTarget(_DataTarget):
    """Ridge-regularized logistic regression with labels in {-1, +1}."""

    def __init__(self, X, y, reg: float):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = _check_pm1(y)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
        if reg <= 0:
            raise ValueError("reg must be positive")
        super().__init__(X, y)
        self.reg = float(reg)
        self.dim = X.shape[1]

    def _margins(self, z2):
        X, y, scale = self._active()
        return X, y, scale, y[None, :] * (z2 @ X.T)  # (n, B)

    def _value(self, z2):
        _, _, scale, m = self._margins(z2)
        return 0.5 * self.reg * np.sum(z2**2, axis=1) - scale * np.sum(log_expit(m), axis=1)

    def _grad(self, z2):
        X, y, scale, m = self._margins(z2)
        coef = -y[None, :] * expit(-m)
        return self.reg * z2 + scale * coef @ X

    def _hess_diag(self, z2):
        X, _, scale, m = self._margins(z2)
        p = expit(m)
        return self.reg + scale * (p * (1.0 - p)) @ (X**2)


def make_logistic_regression_target(X, y, reg: float) -> LogisticRegressionTarget:
    return LogisticRegressionTarget(X, y, reg)


@dataclass(frozen=True)
class BnnArch:
    """One-hidden-layer perceptron; ``hidden=0`` gives a linear model.

    The flat weight vector is laid out as ``[W1 (in x hidden), b1, W2
    (hidden x out), b2]``.
    """

    in_dim: int
    hidden: int = 50
    out_dim: int = 1
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        if self.hidden == 0:
            return self.in_dim * self.out_dim + self.out_dim
        return (self.in_dim + 1) * self.hidden + (self.hidden + 1) * self.out_dim

    def unpack(self, z2):
        n = z2.shape[0]
        i, h, o = self.in_dim, self.hidden, self.out_dim
        if h == 0:
            return None, None, z2[:, : i * o].reshape(n, i, o), z2[:, i * o:]
        c = 0
        W1 = z2[:, c:c + i * h].reshape(n, i, h)
        c += i * h
        b1 = z2[:, c:c + h]
        c += h
        W2 = z2[:, c:c + h * o].reshape(n, h, o)
        c += h * o
        b2 = z2[:, c:c + o]
        return W1, b1, W2, b2

    def _act(self, a):
        return np.maximum(a, 0.0) if self.activation == "relu" else a

    def _act_grad(self, a):
        return (a > 0).astype(float) if self.activation == "relu" else np.ones_like(a)

    def forward(self, z, X, return_cache=False):
        """Network outputs for every weight vector: shape ``(n, B, out)``."""
        z2 = np.atleast_2d(np.asarray(z, dtype=float))
        if z2.shape[-1] != self.n_params:
            raise ValueError(f"expected {self.n_params} weights, got {z2.shape[-1]}")
        W1, b1, W2, b2 = self.unpack(z2)
        if self.hidden == 0:
            out = np.einsum("bi,nio->nbo", X, W2) + b2[:, None, :]
            _check_finite(out, "output")
            return (out, (None, X)) if return_cache else out
        pre = np.einsum("bi,nih->nbh", X, W1) + b1[:, None, :]
        _check_finite(pre, "hidden")
        act = self._act(pre)
        out = np.einsum("nbh,nho->nbo", act, W2) + b2[:, None, :]
        _check_finite(out, "output")
        return (out, (pre, act)) if return_cache else out

    def output_jacobian(self, z2, X):
        """d out / d z for each weight vector and example: ``(n, B, out, P)``."""
        out, (pre, act) = self.forward(z2, X, return_cache=True)
        n, B, o = out.shape
        eye = np.eye(o)
        if self.hidden == 0:
            dW = np.einsum("bi,op->boip", X, eye).reshape(1, B, o, -1)
            dW = np.broadcast_to(dW, (n, B, o, dW.shape[-1]))
            db = np.broadcast_to(eye, (n, B, o, o))
            return np.concatenate([dW, db], axis=-1)
        _, _, W2, _ = self.unpack(z2)
        gate = self._act_grad(pre)  # (n, B, h)
        dpre = gate[:, :, None, :] * np.transpose(W2, (0, 2, 1))[:, None, :, :]  # (n, B, o, h)
        dW1 = np.einsum("bi,nboh->nboih", X, dpre).reshape(n, B, o, -1)
        db1 = dpre
        dW2 = np.einsum("nbh,op->nbohp", act, eye).reshape(n, B, o, -1)
        db2 = np.broadcast_to(eye, (n, B, o, o))
        return np.concatenate([dW1, db1, dW2, db2], axis=-1)


def _check_finite(a, layer):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite value in the {layer} layer of the forward pass")


class BnnTarget(_DataTarget):
    """Negated log joint of a one-hidden-layer network with a Gaussian prior.

    Regression uses a unit-variance Gaussian likelihood (loss = err^2 / 2);
    classification uses the logistic likelihood with labels in {-1, +1}.

    ``hess_mode`` selects the diagonal Hessian estimator:

    * ``"hutchinson"``: mean of ``v * (H v)`` over ``probes`` Rademacher
      vectors, ``H v`` by central differences of the gradient.
    * ``"gauss_newton"``: deterministic Gauss-Newton diagonal. For a single
      hidden layer with a linear output this coincides with the exact
      diagonal almost everywhere.
    """

    def __init__(self, arch: BnnArch, X, y, reg: float, task: str = "regression",
                 hess_mode: str = "hutchinson", probes: int = 64, fd_step: float = 1e-5,
                 rng: np.random.Generator | None = None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if task not in ("regression", "classification"):
            raise ValueError(f"unknown task {task!r}")
        if task == "classification":
            if arch.out_dim != 1:
                raise ValueError("binary classification needs out_dim=1")
            y = _check_pm1(y)
        else:
            y = np.asarray(y, dtype=float).reshape(X.shape[0], -1)
            if y.shape[1] != arch.out_dim:
                raise ValueError(f"targets have {y.shape[1]} columns but out_dim={arch.out_dim}")
        if X.shape[0] != y.shape[0] or X.shape[1] != arch.in_dim:
            raise ValueError(f"X shape {X.shape} inconsistent with arch in_dim={arch.in_dim} or y")
        if reg <= 0:
            raise ValueError("reg must be positive")
        if hess_mode not in ("hutchinson", "gauss_newton"):
            raise ValueError(f"unknown hess_mode {hess_mode!r}")
        super().__init__(X, y)
        self.arch = arch
        self.reg = float(reg)
        self.task = task
        self.hess_mode = hess_mode
        self.probes = int(probes)
        self.fd_step = float(fd_step)
        self.rng = np.random.default_rng(0) if rng is None else rng
        self.dim = arch.n_params

    def _residual_terms(self, out, y):
        # per-example loss, its first and second derivative in the output
        if self.task == "regression":
            err = out - y[None]
            return 0.5 * np.sum(err**2, axis=-1), err, np.ones_like(err)
        m = y[None, :, None] * out
        loss = -log_expit(m)[..., 0]
        d1 = -y[None, :, None] * expit(-m)
        p = expit(out)
        return loss, d1, p * (1.0 - p)

    def _value(self, z2):
        X, y, scale = self._active()
        out = self.arch.forward(z2, X)
        loss, _, _ = self._residual_terms(out, y)
        return 0.5 * self.reg * np.sum(z2**2, axis=1) + scale * loss.sum(axis=1)

    def _grad(self, z2):
        X, y, scale = self._active()
        arch = self.arch
        out, (pre, act) = arch.forward(z2, X, return_cache=True)
        _, d_out, _ = self._residual_terms(out, y)  # (n, B, o)
        n = z2.shape[0]
        if arch.hidden == 0:
            gW = np.einsum("bi,nbo->nio", X, d_out).reshape(n, -1)
            gb = d_out.sum(axis=1)
            g = np.concatenate([gW, gb], axis=1)
        else:
            _, _, W2, _ = arch.unpack(z2)
            gW2 = np.einsum("nbh,nbo->nho", act, d_out).reshape(n, -1)
            gb2 = d_out.sum(axis=1)
            d_act = np.einsum("nbo,nho->nbh", d_out, W2)
            d_pre = d_act * arch._act_grad(pre)
            gW1 = np.einsum("bi,nbh->nih", X, d_pre).reshape(n, -1)
            gb1 = d_pre.sum(axis=1)
            g = np.concatenate([gW1, gb1, gW2, gb2], axis=1)
        return self.reg * z2 + scale * g

    def gauss_newton_diag(self, z):
        z2, single = self._batch(z)
        X, y, scale = self._active()
        J = self.arch.output_jacobian(z2, X)  # (n, B, o, P)
        out = self.arch.forward(z2, X)
        _, _, d2 = self._residual_terms(out, y)
        out_diag = self.reg + scale * np.einsum("nbo,nbop->np", d2, J**2)
        return out_diag[0] if single else out_diag

    def hutchinson_diag(self, z, probes: int | None = None):
        z2, single = self._batch(z)
        P = self.probes if probes is None else probes
        n, D = z2.shape
        v = self.rng.choice((-1.0, 1.0), size=(n, P, D))
        h = self.fd_step * (1.0 + np.max(np.abs(z2), axis=1))  # (n,)
        pts = np.concatenate([
            z2[:, None, :] + h[:, None, None] * v,
            z2[:, None, :] - h[:, None, None] * v,
        ], axis=1).reshape(-1, D)
        g = self._grad(pts).reshape(n, 2 * P, D)
        Hv = (g[:, :P] - g[:, P:]) / (2.0 * h[:, None, None])
        out = np.mean(v * Hv, axis=1)
        return out[0] if single else out

    def _hess_diag(self, z2):
        if self.hess_mode == "gauss_newton":
            return self.gauss_newton_diag(z2)
        return self.hutchinson_diag(z2)


def make_bnn_target(arch: BnnArch, X, y, reg: float, task: str = "regression", **kwargs) -> BnnTarget:
    return BnnTarget(arch, X, y, reg, task, **kwargs)


def finite_diff_grad(target, z, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``target.value`` at a single point."""
    if step <= 0:
        raise ValueError("step must be positive")
    z = np.asarray(z, dtype=float)
    E = np.eye(z.shape[0]) * step
    plus = target.value(z[None] + E)
    minus = target.value(z[None] - E)
    return (np.asarray(plus) - np.asarray(minus)) / (2.0 * step)


def finite_diff_hess_diag(target, z, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``target.grad`` along each coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    z = np.asarray(z, dtype=float)
    E = np.eye(z.shape[0]) * step
    plus = np.atleast_2d(target.grad(z[None] + E))
    minus = np.atleast_2d(target.grad(z[None] - E))
    return np.diagonal(plus - minus) / (2.0 * step)


def finite_diff_hess_diag_from_value(fun, z, step: float = 1e-4) -> np.ndarray:
    """Second-order central differences of a scalar function."""
    z = np.asarray(z, dtype=float)
    f0 = fun(z)
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        e = np.zeros_like(z)
        e[i] = step
        out[i] = (fun(z + e) - 2.0 * f0 + fun(z - e)) / step**2
    return out
