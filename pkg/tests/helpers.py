"""Small targets and generators shared by the test modules."""

import numpy as np

from vpflow.mixture import ParticleMixture
from vpflow.targets import TargetModel


class QuadraticTarget(TargetModel):
    """f(z) = 0.5 * sum_i a_i (z_i - b_i)^2 + c, optionally normalized."""

    def __init__(self, a, b, c=0.0, normalized=False):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.b = np.broadcast_to(np.asarray(b, dtype=float), self.a.shape).copy()
        self.dim = self.a.shape[0]
        if normalized:
            c = 0.5 * self.dim * np.log(2 * np.pi) - 0.5 * np.log(self.a).sum()
            self.has_log_density = True
        self.c = float(c)

    def _value(self, z2):
        return 0.5 * np.sum(self.a * (z2 - self.b) ** 2, axis=1) + self.c

    def _grad(self, z2):
        return self.a * (z2 - self.b)

    def _hess_diag(self, z2):
        return np.broadcast_to(self.a, z2.shape).copy()

    def log_density(self, z):
        return -np.asarray(self.value(z))


class ZeroTarget(QuadraticTarget):
    def __init__(self, dim=1):
        super().__init__(np.zeros(dim), np.zeros(dim))


def random_mixture(rng, K, d, spread=1.0, s_range=(0.5, 3.0)):
    means = spread * rng.standard_normal((K, d))
    precs = rng.uniform(*s_range, size=(K, d))
    weights = rng.dirichlet(np.ones(K))
    return ParticleMixture(means, precs, weights)
