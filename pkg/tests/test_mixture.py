import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_mixture
from vpflow.mixture import (
    GaussianParticle,
    ParticleMixture,
    component_log_density,
    component_log_densities,
    component_param_grads,
    mixture_hess_diag,
    mixture_log_density,
    mixture_score,
    responsibilities,
    sample_component,
    sample_mixture,
    score_and_hess_diag,
)
from vpflow.targets import finite_diff_hess_diag_from_value

mp.mp.dps = 50


def mp_component_logpdf(mu, s, z):
    d = len(mu)
    out = -mp.mpf(d) / 2 * mp.log(2 * mp.pi)
    for m_, s_, z_ in zip(mu, s, z):
        m_, s_, z_ = mp.mpf(m_), mp.mpf(s_), mp.mpf(z_)
        out += mp.log(s_) / 2 - s_ * (z_ - m_) ** 2 / 2
    return out


def mp_mixture_logpdf(m, z):
    total = mp.mpf(0)
    for k in range(m.K):
        total += mp.mpf(m.weights[k]) * mp.exp(mp_component_logpdf(m.means[k], m.precisions[k], z))
    return mp.log(total)


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-12)


mixtures = st.builds(
    lambda seed, K, d: random_mixture(np.random.default_rng(seed), K, d),
    st.integers(0, 2**31), st.integers(1, 5), st.integers(1, 4),
)


# --- particle / mixture types -------------------------------------------------


def test_particle_rejects_bad_precision():
    with pytest.raises(ValueError):
        GaussianParticle(np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        GaussianParticle(np.zeros(2), np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        GaussianParticle(np.zeros(2), np.ones(3))


def test_particle_parameter_views():
    p = GaussianParticle(np.array([1.0, -2.0]), np.array([2.0, 0.5]))
    n1, n2 = p.natural_params()
    np.testing.assert_allclose(n1, [2.0, -1.0])
    np.testing.assert_allclose(n2, [-1.0, -0.25])
    m1, m2 = p.expectation_params()
    np.testing.assert_allclose(m2, [1.5, 6.0])


def test_mixture_validates_weights():
    with pytest.raises(ValueError):
        ParticleMixture(np.zeros((2, 1)), np.ones((2, 1)), [0.5, 0.6])
    with pytest.raises(ValueError):
        ParticleMixture(np.zeros((2, 1)), np.ones((2, 1)), [1.5, -0.5])
    with pytest.raises(ValueError):
        ParticleMixture.from_particles([GaussianParticle([0.0], [1.0]), GaussianParticle([0.0, 1.0], [1.0, 1.0])])


# --- component density --------------------------------------------------------


def test_standard_normal_at_mode():
    p = GaussianParticle([0.0], [1.0])
    assert component_log_density(p, np.array([0.0])) == pytest.approx(-0.9189385332, abs=1e-10)


def test_log_density_at_mean_2d():
    s = np.array([2.0, 0.5])
    p = GaussianParticle([0.4, 0.1], s)
    expected = 0.5 * np.log(s).sum() - np.log(2 * np.pi)
    assert component_log_density(p, p.mu) == pytest.approx(expected, abs=1e-14)


def test_log_density_against_high_precision():
    mu, s, z = [0.3, -0.7], [2.0, 0.5], [1.0, 1.0]
    ref = float(mp_component_logpdf(mu, s, z))
    assert component_log_density(GaussianParticle(mu, s), np.array(z)) == pytest.approx(ref, rel=1e-14)


def test_component_dimension_mismatch():
    with pytest.raises(ValueError):
        component_log_density(GaussianParticle([0.0, 0.0], [1.0, 1.0]), np.zeros(3))


def test_batched_and_single_agree(rng):
    m = random_mixture(rng, 3, 2)
    z = rng.standard_normal((5, 2))
    batch = mixture_log_density(m, z)
    assert batch.shape == (5,)
    for i in range(5):
        assert mixture_log_density(m, z[i]) == pytest.approx(batch[i], abs=1e-14)
    assert component_log_densities(m, z).shape == (5, 3)


# --- mixture density ----------------------------------------------------------


def test_single_component_mixture_equals_component(rng):
    m = random_mixture(rng, 1, 3)
    z = rng.standard_normal(3)
    assert mixture_log_density(m, z) == pytest.approx(component_log_density(m.particle(0), z), abs=1e-14)


def test_duplicate_identical_particles():
    p = GaussianParticle([0.2, -0.1], [1.5, 0.7])
    m = ParticleMixture.from_particles([p, p], [0.5, 0.5])
    z = np.array([1.0, 0.3])
    assert mixture_log_density(m, z) == pytest.approx(component_log_density(p, z), abs=1e-14)


def test_two_component_against_direct_summation():
    m = ParticleMixture([[-1.0], [1.0]], [[1.0], [1.0]], [0.3, 0.7])
    ref = float(mp_mixture_logpdf(m, [0.0]))
    assert mixture_log_density(m, np.array([0.0])) == pytest.approx(ref, rel=1e-14)


def test_far_apart_clusters_do_not_underflow():
    m = ParticleMixture([[-50.0], [50.0]], [[100.0], [100.0]])
    z = np.array([[0.0], [50.0], [-50.0]])
    lq = mixture_log_density(m, z)
    assert np.all(np.isfinite(lq))
    assert np.all(np.isfinite(mixture_score(m, z)))
    assert np.all(np.isfinite(mixture_hess_diag(m, z)))
    assert np.all(np.isfinite(responsibilities(m, z)))
    ref = float(mp_mixture_logpdf(m, [0.0]))
    assert lq[0] == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("d", [1, 2])
def test_density_integrates_to_one(d):
    m = ParticleMixture(np.array([[-0.5, 0.3], [0.8, -0.2], [0.1, 0.9]])[:, :d],
                        np.array([[4.0, 2.0], [1.5, 3.0], [2.5, 5.0]])[:, :d], [0.2, 0.5, 0.3])
    n = 4001 if d == 1 else 801
    g = np.linspace(-8, 8, n)
    h = g[1] - g[0]
    if d == 1:
        pts = g[:, None]
    else:
        A, B = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([A.ravel(), B.ravel()])
    total = np.exp(mixture_log_density(m, pts)).sum() * h**d
    assert total == pytest.approx(1.0, abs=1e-3)


# --- score and Hessian --------------------------------------------------------


def test_score_vanishes_at_mean_for_single():
    p = GaussianParticle([0.3, -1.2], [2.0, 0.4])
    m = ParticleMixture.from_particles([p])
    np.testing.assert_array_equal(mixture_score(m, p.mu), np.zeros(2))


def test_standard_normal_score():
    m = ParticleMixture([[0.0]], [[1.0]])
    assert mixture_score(m, np.array([1.0]))[0] == pytest.approx(-1.0, abs=1e-15)


def test_single_hess_is_minus_precision(rng):
    m = random_mixture(rng, 1, 3)
    for z in rng.standard_normal((10, 3)) * 3:
        np.testing.assert_allclose(mixture_hess_diag(m, z), -m.precisions[0], atol=1e-12)


def test_symmetric_pair_hessian_zero_at_origin():
    m = ParticleMixture([[-1.0], [1.0]], [[1.0], [1.0]])
    z = np.array([0.0])
    assert mixture_score(m, z)[0] == pytest.approx(0.0, abs=1e-15)
    assert mixture_hess_diag(m, z)[0] == pytest.approx(0.0, abs=1e-14)
    fd = finite_diff_hess_diag_from_value(lambda x: mixture_log_density(m, x), z)
    assert fd[0] == pytest.approx(0.0, abs=1e-4)


def test_score_matches_finite_differences_100_pairs(rng):
    worst = 0.0
    for _ in range(100):
        m = random_mixture(rng, 3, int(rng.integers(1, 5)))
        z = rng.standard_normal(m.dim)
        fd = np.array([
            (mixture_log_density(m, z + e) - mixture_log_density(m, z - e)) / 2e-5
            for e in np.eye(m.dim) * 1e-5
        ])
        worst = max(worst, rel(mixture_score(m, z), fd))
    assert worst < 1e-6


def test_hessian_matches_second_differences_100_pairs(rng):
    worst = 0.0
    for _ in range(100):
        m = random_mixture(rng, 3, int(rng.integers(1, 5)))
        z = rng.standard_normal(m.dim)
        fd = finite_diff_hess_diag_from_value(lambda x: mixture_log_density(m, x), z)
        worst = max(worst, np.max(np.abs(mixture_hess_diag(m, z) - fd)))
    assert worst < 1e-4


def test_score_and_hess_combined(rng):
    m = random_mixture(rng, 4, 3)
    z = rng.standard_normal((7, 3))
    sc, h = score_and_hess_diag(m, z)
    np.testing.assert_allclose(sc, mixture_score(m, z), atol=1e-14)
    np.testing.assert_allclose(h, mixture_hess_diag(m, z), atol=1e-14)


# --- responsibilities ---------------------------------------------------------


def test_responsibility_single():
    m = ParticleMixture([[0.5]], [[2.0]])
    np.testing.assert_allclose(responsibilities(m, np.array([3.0])), [1.0])


def test_responsibility_identical_pair():
    m = ParticleMixture([[0.5], [0.5]], [[2.0], [2.0]])
    np.testing.assert_allclose(responsibilities(m, np.array([-1.0])), [1.0, 1.0], atol=1e-14)


def test_responsibility_direct_ratio():
    m = ParticleMixture([[-1.0, 0.0], [1.0, 0.5]], [[1.0, 2.0], [0.5, 1.0]], [0.3, 0.7])
    z = np.array([0.2, -0.4])
    qk = [float(mp.exp(mp_component_logpdf(m.means[k], m.precisions[k], z))) for k in range(2)]
    qn = float(mp.exp(mp_mixture_logpdf(m, z)))
    w = responsibilities(m, z)
    np.testing.assert_allclose(w, np.array(qk) / qn, rtol=1e-13)
    assert np.dot(m.weights, w) == pytest.approx(1.0, abs=1e-12)


@given(mixtures, st.integers(0, 2**31))
def test_weighted_responsibilities_sum_to_one(m, seed):
    z = 2.0 * np.random.default_rng(seed).standard_normal((20, m.dim))
    w = responsibilities(m, z)
    np.testing.assert_allclose(w @ m.weights, 1.0, atol=1e-12)


@given(mixtures, st.integers(0, 2**31))
def test_duplicating_a_particle_changes_nothing(m, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(m.K))
    means = np.vstack([m.means, m.means[k]])
    precs = np.vstack([m.precisions, m.precisions[k]])
    weights = np.append(m.weights, 0.5 * m.weights[k])
    weights[k] *= 0.5
    dup = ParticleMixture(means, precs, weights / weights.sum())
    z = 1.5 * rng.standard_normal((10, m.dim))
    np.testing.assert_allclose(mixture_log_density(dup, z), mixture_log_density(m, z), atol=1e-12, rtol=0)
    np.testing.assert_allclose(mixture_score(dup, z), mixture_score(m, z), atol=1e-12, rtol=0)
    np.testing.assert_allclose(mixture_hess_diag(dup, z), mixture_hess_diag(m, z), atol=1e-12, rtol=0)


# --- parameter gradients ------------------------------------------------------


def test_param_grads_at_mean():
    p = GaussianParticle([0.1, 0.2], [2.0, 4.0])
    gm, gs = component_param_grads(p, p.mu)
    np.testing.assert_array_equal(gm, 0.0)
    np.testing.assert_allclose(gs, [0.25, 0.125])


def test_param_grads_unit_deviation():
    gm, gs = component_param_grads(GaussianParticle([0.0], [1.0]), np.array([1.0]))
    assert gm[0] == 1.0 and gs[0] == 0.0


def test_param_grads_match_finite_differences(rng):
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        mu, s, z = rng.standard_normal(d), rng.uniform(0.5, 3.0, d), rng.standard_normal(d)
        gm, gs = component_param_grads(GaussianParticle(mu, s), z)
        E = np.eye(d) * h
        fd_mu = [(component_log_density(GaussianParticle(mu + e, s), z)
                  - component_log_density(GaussianParticle(mu - e, s), z)) / (2 * h) for e in E]
        fd_s = [(component_log_density(GaussianParticle(mu, s + e), z)
                 - component_log_density(GaussianParticle(mu, s - e), z)) / (2 * h) for e in E]
        worst = max(worst, rel(np.concatenate([gm, gs]), np.concatenate([fd_mu, fd_s])))
    assert worst < 1e-6


# --- sampling -----------------------------------------------------------------


def test_huge_precision_concentrates(rng):
    p = GaussianParticle([1.0, -3.0], [1e12, 1e12])
    z = sample_component(p, rng, size=1000)
    assert np.max(np.abs(z - p.mu)) < 1e-5


def test_component_sample_mean_clt(rng):
    p = GaussianParticle([0.7, -1.1], [4.0, 0.25])
    N = 100_000
    z = sample_component(p, rng, size=N)
    sigma = 1.0 / np.sqrt(p.s)
    assert np.all(np.abs(z.mean(axis=0) - p.mu) < 4 * sigma / np.sqrt(N))


def test_degenerate_weights_sample_first_particle(rng):
    m = ParticleMixture([[0.0], [100.0]], [[1.0], [1.0]], [1.0, 0.0])
    z, labels = sample_mixture(m, rng, size=5000, return_labels=True)
    assert np.all(labels == 0)
    assert np.all(np.abs(z) < 10)


def test_sampling_is_deterministic_given_seed():
    m = ParticleMixture([[0.0], [3.0]], [[1.0], [2.0]], [0.4, 0.6])
    a = sample_mixture(m, np.random.default_rng(5), size=100)
    b = sample_mixture(m, np.random.default_rng(5), size=100)
    np.testing.assert_array_equal(a, b)
    assert sample_mixture(m, np.random.default_rng(5)).shape == (1,)
