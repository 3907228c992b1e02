# # Particle mixtures
#
# A variational density here is a weighted set of diagonal Gaussian
# particles. This notebook builds one, evaluates its density and score, and
# checks the sampler against the density.

import numpy as np

from vpflow import ParticleMixture, mixture_log_density, sample_mixture
from vpflow.mixture import mixture_hess_diag, mixture_score, responsibilities

rng = np.random.default_rng(0)

# ## Building a mixture
#
# Means and precisions are stacked ``(K, d)`` arrays; weights default to uniform.

q = ParticleMixture(
    means=[[-1.0, 0.0], [1.5, 0.5], [0.0, 2.0]],
    precisions=[[1.0, 4.0], [2.0, 2.0], [0.5, 1.0]],
    weights=[0.5, 0.3, 0.2],
)
q.K, q.dim

# ## Density, score and Hessian diagonal

z = np.array([[0.0, 0.0], [1.0, 1.0], [3.0, -2.0]])
print("log q(z):", mixture_log_density(q, z))
print("score:\n", mixture_score(q, z))
print("diag Hessian:\n", mixture_hess_diag(q, z))

# Responsibilities say which particle "owns" each point; rows sum to one.

r = responsibilities(q, z)
print(r, r.sum(axis=1))

# ## Sampling
#
# Draws pick a particle by weight, then a point from it. The empirical
# label frequencies should match the weights.

x, labels = sample_mixture(q, rng, size=100_000, return_labels=True)
print("label frequencies:", np.bincount(labels) / labels.size)

# A density sanity check: the mean of 1/q(x) times a box indicator recovers
# the box area, whatever the mixture.

box = np.all(np.abs(x) < 1.0, axis=1)
print("estimated area of [-1,1]^2:", np.mean(box * np.exp(-mixture_log_density(q, x))))
