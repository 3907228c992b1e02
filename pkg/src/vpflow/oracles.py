"""Finite-difference checks for every analytic derivative in the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import (
    ParticleMixture,
    component_log_density,
    component_param_grads,
    mixture_hess_diag,
    mixture_log_density,
    mixture_score,
)
from .targets import BnnTarget, finite_diff_grad, finite_diff_hess_diag

GRAD_TOL = 1e-6
HESS_TOL = 1e-4
HUTCHINSON_TOL = 0.1
HUTCHINSON_PROBES = 64


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float
    n_points: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err < self.tol

    def line(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return f"{status:4s} {self.name:40s} max rel err {self.max_rel_err:.2e} (tol {self.tol:.0e}, {self.n_points} points)"


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


class _Fn:
    """Adapter giving a scalar function the ``value``/``grad`` interface."""

    def __init__(self, value, grad=None):
        self._value, self._grad = value, grad

    def value(self, z):
        return self._value(z)

    def grad(self, z):
        return self._grad(z)


def _max_err(points, analytic, reference):
    return max(rel_err(analytic(z), reference(z)) for z in points)


def check_target(target, points, name="target", hess_tol=None) -> list[CheckResult]:
    """Compare ``grad`` and ``hess_diag`` against central differences.

    Hutchinson-mode BNN targets are compared at ``HUTCHINSON_TOL``; everything
    else at ``HESS_TOL``.
    """
    points = np.atleast_2d(points)
    n = points.shape[0]
    out = [CheckResult(f"{name} grad", _max_err(points, target.grad, lambda z: finite_diff_grad(target, z)),
                       GRAD_TOL, n)]
    if hess_tol is None:
        stochastic = isinstance(target, BnnTarget) and target.hess_mode == "hutchinson"
        hess_tol = HUTCHINSON_TOL if stochastic else HESS_TOL
    out.append(CheckResult(f"{name} hess diag",
                           _max_err(points, target.hess_diag, lambda z: finite_diff_hess_diag(target, z)),
                           hess_tol, n))
    return out


def check_mixture(m: ParticleMixture, points, name="mixture") -> list[CheckResult]:
    """Scores, diagonal Hessians and parameter gradients of a mixture and its components."""
    points = np.atleast_2d(points)
    n = points.shape[0]
    fn = _Fn(lambda z: mixture_log_density(m, z), lambda z: mixture_score(m, z))
    out = [
        CheckResult(f"{name} score", _max_err(points, fn.grad, lambda z: finite_diff_grad(fn, z)), GRAD_TOL, n),
        CheckResult(f"{name} hess diag",
                    _max_err(points, lambda z: mixture_hess_diag(m, z), lambda z: finite_diff_hess_diag(fn, z)),
                    HESS_TOL, n),
    ]
    p = m.particle(0)
    comp = _Fn(lambda z: component_log_density(p, z), lambda z: -p.s * (np.atleast_2d(z) - p.mu).squeeze())
    out.append(CheckResult(f"{name} component score",
                           _max_err(points, comp.grad, lambda z: finite_diff_grad(comp, z)), GRAD_TOL, n))

    def param_grad(z):
        gm, gs = component_param_grads(p, z)
        return np.concatenate([gm, gs])

    def param_fd(z):
        d = p.dim

        def logq(theta):
            theta = np.atleast_2d(theta)
            mu, s = theta[:, :d], theta[:, d:]
            return -0.5 * d * np.log(2 * np.pi) + 0.5 * np.log(s).sum(1) - 0.5 * (s * (z - mu) ** 2).sum(1)

        return finite_diff_grad(_Fn(logq), np.concatenate([p.mu, p.s]))

    out.append(CheckResult(f"{name} component (mu, s) grads", _max_err(points, param_grad, param_fd), GRAD_TOL, n))
    return out


def kink_margin(target: BnnTarget, z) -> float:
    """Smallest |hidden pre-activation| over the full data set at weights ``z``."""
    if target.arch.hidden == 0 or target.arch.activation != "relu":
        return np.inf
    _, (pre, _) = target.arch.forward(z, target.X, return_cache=True)
    return float(np.min(np.abs(pre)))


def check_points(target, n: int, rng: np.random.Generator, scale: float = 1.0,
                 max_tries: int = 10_000) -> np.ndarray:
    """``n`` random points where finite differences are valid.

    ReLU networks are only differentiable away from kinks, so for them a
    candidate is kept only if no difference stencil used here (single
    coordinates or a Rademacher probe) can flip a hidden unit.
    """
    if not isinstance(target, BnnTarget):
        return scale * rng.standard_normal((n, target.dim))
    reach = 1.0 + np.abs(target.X).sum(axis=1).max()
    pts = []
    for _ in range(max_tries):
        z = scale * rng.standard_normal(target.dim)
        h = max(target.fd_step, 1e-5) * (1.0 + np.abs(z).max())
        if kink_margin(target, z) > 4.0 * h * reach:
            pts.append(z)
            if len(pts) == n:
                return np.array(pts)
    raise RuntimeError(f"found only {len(pts)} kink-free points in {max_tries} tries")


def check_bnn_modes(target: BnnTarget, points, name="bnn") -> list[CheckResult]:
    """Exact Gauss-Newton and Hutchinson (``HUTCHINSON_PROBES`` probes) diagonals."""
    mode, probes = target.hess_mode, target.probes
    try:
        target.hess_mode = "gauss_newton"
        out = check_target(target, points, f"{name} (gauss-newton)", HESS_TOL)[1:]
        target.hess_mode, target.probes = "hutchinson", HUTCHINSON_PROBES
        out += check_target(target, points, f"{name} (hutchinson)", HUTCHINSON_TOL)[1:]
    finally:
        target.hess_mode, target.probes = mode, probes
    return out
