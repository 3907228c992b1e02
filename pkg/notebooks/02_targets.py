# # Target models
#
# Every target exposes the unnormalized negative log density f, its gradient
# and its Hessian diagonal. Three families are bundled: a 2D Gaussian mixture,
# Bayesian logistic regression and a one-hidden-layer Bayesian network.

import numpy as np

from vpflow import BnnArch, GmmTargetSpec, make_bnn_target, make_gmm_target, make_logistic_regression_target
from vpflow.data import synthetic_classification, synthetic_regression
from vpflow.oracles import check_bnn_modes, check_points, check_target

rng = np.random.default_rng(1)

# ## Four-cluster Gaussian mixture

means = np.array([[-2.0, -2.0], [-2.0, 2.0], [2.0, -2.0], [2.0, 2.0]])
gmm = make_gmm_target(GmmTargetSpec(means, np.full((4, 2), 4.0), np.full(4, 0.25)))
z = rng.standard_normal((3, 2))
gmm.value(z), gmm.grad(z), gmm.hess_diag(z)

# The mixture target is normalized, so it integrates to one on a grid.

g = np.linspace(-6, 6, 401)
xx, yy = np.meshgrid(g, g)
dens = np.exp(gmm.log_density(np.column_stack([xx.ravel(), yy.ravel()])))
print("integral:", dens.sum() * (g[1] - g[0]) ** 2)

# ## Logistic regression
#
# Labels live in {-1, +1}; the prior is a ridge term ``reg/2 |w|^2``.

ds = synthetic_classification(n=200, seed=0)
logreg = make_logistic_regression_target(ds.X, ds.y, reg=1.0)
for r in check_target(logreg, rng.standard_normal((20, logreg.dim)), "logreg"):
    print(r.line())

# ## Bayesian neural network
#
# The Hessian diagonal is either the exact Gauss-Newton diagonal or a
# Hutchinson estimate from Rademacher probes. The derivative checks use
# points away from ReLU kinks.

reg_ds = synthetic_regression(n=100, seed=0)
arch = BnnArch(in_dim=1, hidden=16)
bnn = make_bnn_target(arch, reg_ds.X, reg_ds.y, reg=0.1)
pts = check_points(bnn, 10, rng, scale=0.5)
for r in check_target(bnn, pts, "bnn")[:1] + check_bnn_modes(bnn, pts, "bnn"):
    print(r.line())

# The Hutchinson error shrinks like one over the square root of the probe
# count, and this network has large off-diagonal curvature, so 64 probes
# leave tens of percent of error.

z0 = pts[0]
bnn.hess_mode = "gauss_newton"
exact = bnn.hess_diag(z0)
bnn.hess_mode = "hutchinson"
for probes in (16, 64, 256, 1024):
    bnn.probes = probes
    est = bnn.hess_diag(z0)
    print(probes, np.linalg.norm(est - exact) / np.linalg.norm(exact))
