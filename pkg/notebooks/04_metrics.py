# # Metrics
#
# KL(q || pi) needs a normalized target; the negated ELBO only needs f. For
# network posteriors the useful number is the held-out loss of the model
# average.

import numpy as np

from vpflow import GmmTargetSpec, ParticleMixture, estimate_kl, estimate_negated_elbo, make_gmm_target

rng = np.random.default_rng(0)

# ## KL against a closed form
#
# For two Gaussians the KL is known exactly, which makes a good check of the
# Monte Carlo estimate and its standard error.

target = make_gmm_target(GmmTargetSpec(np.array([[1.0, -1.0]]), np.array([[2.0, 0.5]]), np.array([1.0])))
q = ParticleMixture([[0.0, 0.0]], [[1.0, 1.0]])
rep = estimate_kl(q, target, 10_000, rng)

p, mu_p = np.array([2.0, 0.5]), np.array([1.0, -1.0])
exact = 0.5 * np.sum(p / 1.0 + p * mu_p**2 - 1 - np.log(p / 1.0))
print(f"estimate {rep.kl_estimate:.4f} +- {rep.std_error:.4f}, exact {exact:.4f}")

# ## Negated ELBO
#
# With a normalized target it equals the KL; otherwise it differs by the log
# normalizer.

print(estimate_negated_elbo(q, target, 10_000, np.random.default_rng(0)).elbo_neg_estimate)

# ## Predictive loss of a network posterior
#
# See the harness notebook for a full run; here a mixture concentrated at zero
# weights predicts zero everywhere, so its MSE equals the mean squared target.

from vpflow import BnnArch, predictive_loss

arch = BnnArch(in_dim=1, hidden=4)
X = np.linspace(-1, 1, 50)[:, None]
y = np.sin(3 * X[:, 0])
q0 = ParticleMixture(np.zeros((1, arch.n_params)), np.full((1, arch.n_params), 1e12))
print(predictive_loss(q0, arch, X, y, 100, rng).predictive_loss, np.mean(y**2))
