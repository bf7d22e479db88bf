import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_difference_gradient, sup_relative_error
from maxent_explore import estimators, sampler
from maxent_explore.envs import make_env
from maxent_explore.estimators import (entropy_iw_from_neighbors,
                                       entropy_knn, entropy_knn_iw,
                                       iw_entropy_gradient,
                                       iw_entropy_gradient_reference,
                                       kl_knn_iw)
from maxent_explore.knn import build_index, knn_query
from maxent_explore.policy import GaussianPolicy, PolicySpec
from maxent_explore.sampler import WeightVector

EULER_GAMMA = 0.5772156649015329


# -- plain estimator -----------------------------------------------------------


def test_hand_evaluated_five_point_line():
    # N=5 points {0..4}, k=1: every radius 1, volume 2, so the estimate is
    # ln(2N/k) + ln k + gamma = ln 10 + gamma.
    rep = entropy_knn(np.arange(5.0)[:, None], k=1)
    assert rep.value == pytest.approx(math.log(10.0) + EULER_GAMMA, rel=1e-12)
    assert rep.n_samples == 5 and rep.k == 1
    assert rep.mean_radius == 1.0
    assert rep.ess == 5.0


def test_uniform_square_entropy_near_zero():
    rng = np.random.default_rng(0)
    rep = entropy_knn(rng.uniform(size=(100_000, 2)), k=4)
    assert abs(rep.value) < 0.05  # true differential entropy is 0


def test_gaussian_entropy_matches_closed_form():
    rng = np.random.default_rng(1)
    rep = entropy_knn(rng.standard_normal((100_000, 1)), k=4)
    assert rep.value == pytest.approx(0.5 * math.log(2 * math.pi * math.e),
                                      abs=0.05)


def test_duplicate_points_floored_not_infinite():
    pts = np.array([[0.0], [0.0], [0.0], [1.0], [2.0]])
    rep = entropy_knn(pts, k=1)
    assert np.isfinite(rep.value)
    assert rep.n_floored_radii == 3


# -- IW estimator ----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(6, 60), st.integers(1, 3))
def test_uniform_weights_reduce_iw_to_plain(seed, n, p):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, p))
    k = int(rng.integers(1, min(6, n - 1) + 1))
    plain = entropy_knn(pts, k).value
    iw = entropy_knn_iw(pts, WeightVector.uniform(n), k)
    kl = kl_knn_iw(pts, WeightVector.uniform(n), k)
    assert abs(iw.value - plain) <= 1e-12
    assert abs(kl.value) <= 1e-12
    assert not kl.capped


def test_iw_reweighted_uniform_pair_recovers_target_entropy():
    # Sampling U([0,2]), target U([0,1]): the IW estimate must match the
    # target's entropy (0), not the sampling distribution's (ln 2).
    rng = np.random.default_rng(2)
    pts = rng.uniform(0.0, 2.0, size=(100_000, 1))
    log_r = np.where(pts[:, 0] < 1.0, math.log(2.0), -np.inf)
    shifted = np.exp(log_r - log_r.max())
    wv = WeightVector(log_ratios=log_r, weights=shifted / shifted.sum())
    rep = entropy_knn_iw(pts, wv, k=4)
    assert abs(rep.value) < 0.07
    assert rep.n_zero_weight_neighborhoods > 0  # the (1,2] region has no mass


def test_concentrated_weights_lower_entropy_than_uniform():
    rng = np.random.default_rng(3)
    pts = rng.uniform(size=(500, 2))
    neighbors = knn_query(build_index(pts), 4)
    uniform = entropy_iw_from_neighbors(neighbors, 2, WeightVector.uniform(500))
    # all mass on particle 0 and its neighborhood
    log_r = np.full(500, -200.0)
    log_r[0] = 0.0
    log_r[neighbors.indices[0]] = 0.0
    concentrated = entropy_iw_from_neighbors(
        neighbors, 2, WeightVector.from_log_ratios(log_r))
    assert concentrated.value < uniform.value


def test_weight_shape_and_normalization_validated():
    pts = np.random.default_rng(4).uniform(size=(20, 2))
    with pytest.raises(ValueError):
        entropy_knn_iw(pts, WeightVector.uniform(19), k=3)
    bad = WeightVector(log_ratios=np.zeros(20), weights=np.full(20, 0.9 / 20))
    with pytest.raises(ValueError):
        kl_knn_iw(pts, bad, k=3)


# -- KL estimator -----------------------------------------------------------------


def test_kl_zero_at_identity():
    pts = np.random.default_rng(5).uniform(size=(200, 2))
    kl = kl_knn_iw(pts, WeightVector.uniform(200), k=4)
    assert abs(kl.value) <= 1e-12


def test_kl_continuous_at_identity():
    rng = np.random.default_rng(6)
    pts = rng.uniform(size=(300, 2))
    noise = rng.standard_normal(300)
    values = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        wv = WeightVector.from_log_ratios(eps * noise)
        values.append(abs(kl_knn_iw(pts, wv, k=4).value))
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-5


def test_kl_two_level_pair_converges_to_ln2():
    # Common-support pair with bounded ratio and true KL(f||f') = ln 2.
    rng = np.random.default_rng(7)
    n = 100_000
    x = rng.uniform(0.0, 1.0, size=(n, 1))
    ratios = np.where(x[:, 0] < 0.5, 1.0 - math.sqrt(3) / 2, 1.0 + math.sqrt(3) / 2)
    wv = WeightVector.from_log_ratios(np.log(ratios))
    kl = kl_knn_iw(x, wv, k=4)
    assert kl.value == pytest.approx(math.log(2.0), abs=0.07)
    assert kl.value > 0  # sign convention pinned numerically


def test_kl_caps_when_neighborhoods_lose_all_mass():
    rng = np.random.default_rng(8)
    pts = rng.uniform(0.0, 2.0, size=(500, 1))
    log_r = np.where(pts[:, 0] < 1.0, math.log(2.0), -np.inf)
    shifted = np.exp(log_r - log_r.max())
    wv = WeightVector(log_ratios=log_r, weights=shifted / shifted.sum())
    kl = kl_knn_iw(pts, wv, k=4, kl_ceiling=1e6)
    assert kl.capped
    assert kl.value == 1e6
    assert kl.n_zero_weight_neighborhoods > 0


# -- shared invariants --------------------------------------------------------------


def test_permutation_invariance():
    rng = np.random.default_rng(9)
    n = 300
    pts = rng.standard_normal((n, 2))
    log_r = 0.3 * rng.standard_normal(n)
    wv = WeightVector.from_log_ratios(log_r)
    perm = rng.permutation(n)
    wv_p = WeightVector.from_log_ratios(log_r[perm])
    assert abs(entropy_knn(pts, 4).value - entropy_knn(pts[perm], 4).value) <= 1e-12
    assert abs(entropy_knn_iw(pts, wv, 4).value
               - entropy_knn_iw(pts[perm], wv_p, 4).value) <= 1e-12
    assert abs(kl_knn_iw(pts, wv, 4).value
               - kl_knn_iw(pts[perm], wv_p, 4).value) <= 1e-12


def test_estimates_are_deterministic():
    rng = np.random.default_rng(10)
    pts = rng.uniform(size=(400, 3))
    a = entropy_knn(pts, 5).value
    b = entropy_knn(pts.copy(), 5).value
    assert a == b


def test_bias_shrinks_with_sample_size():
    biases = []
    for n in (1_000, 10_000, 100_000):
        vals = [entropy_knn(np.random.default_rng([s, n]).uniform(size=(n, 2)),
                            4).value for s in range(5)]
        biases.append(abs(float(np.mean(vals))))
    assert biases[2] < biases[0]


def test_variance_shrinks_with_sample_size():
    def run(n, seeds):
        out = []
        for s in range(seeds):
            rng = np.random.default_rng([s, n])
            x = rng.uniform(0.0, 1.0, size=(n, 1))
            r = np.where(x[:, 0] < 0.5, 1.0 - math.sqrt(3) / 2,
                         1.0 + math.sqrt(3) / 2)
            wv = WeightVector.from_log_ratios(np.log(r))
            out.append(entropy_knn_iw(x, wv, 4).value)
        return float(np.var(out, ddof=1))

    assert run(1000, 20) > run(4000, 20)


# -- gradient of the IW estimator -----------------------------------------------------


def h_iw_fn(dataset, neighbors, policy, theta0):
    p = dataset.particles.shape[1]

    def fn(theta):
        wv = sampler.log_ratios(dataset, policy, theta, theta0)
        return entropy_iw_from_neighbors(neighbors, p, wv).value

    return fn


def test_gradient_matches_finite_differences(small_instance):
    policy, theta0, dataset, neighbors = small_instance
    fn = h_iw_fn(dataset, neighbors, policy, theta0)
    rng = np.random.default_rng(20)
    for trial in range(3):
        theta_p = theta0 + 0.05 * trial * rng.standard_normal(theta0.shape)
        grad = iw_entropy_gradient(dataset, neighbors, policy, theta_p, theta0)
        fd = finite_difference_gradient(fn, theta_p)
        assert sup_relative_error(grad, fd) < 1e-4


def test_gradient_reference_path_agrees(small_instance):
    policy, theta0, dataset, neighbors = small_instance
    theta_p = theta0 + 0.05 * np.random.default_rng(21).standard_normal(theta0.shape)
    fast = iw_entropy_gradient(dataset, neighbors, policy, theta_p, theta0)
    slow = iw_entropy_gradient_reference(dataset, neighbors, policy, theta_p,
                                         theta0)
    np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-12)


def test_gradient_volume_term_variant_differs(small_instance):
    # The diagnostic variant replaces the calculus-correct additive 1 with
    # the sphere volume; it must not match finite differences.
    policy, theta0, dataset, neighbors = small_instance
    fn = h_iw_fn(dataset, neighbors, policy, theta0)
    fd = finite_difference_gradient(fn, theta0)
    wrong = iw_entropy_gradient(dataset, neighbors, policy, theta0, theta0,
                                use_volume_term=True)
    assert sup_relative_error(wrong, fd) > 1e-2


def test_gradient_single_step_prefix_hand_assembled():
    # N=3 particles with one-step prefixes, k=1: the gradient must equal
    # sum_i c_i * sum_{j in N_i} dw_j assembled by hand from per-particle
    # scores.
    env = make_env("ndgrid", dim=1)
    spec = PolicySpec(1, 1, (4,), "tanh")
    policy = GaussianPolicy(spec)
    theta0 = policy.init_params(np.random.default_rng(30))
    dataset = sampler.collect(policy, theta0, env, horizon=1, n_traj=3,
                              master_seed=31)
    neighbors = knn_query(build_index(dataset.particles), 1)
    theta_p = theta0 + 0.1 * np.random.default_rng(32).standard_normal(theta0.shape)

    wv = sampler.log_ratios(dataset, policy, theta_p, theta0)
    w = wv.weights
    scores = np.stack([
        policy.log_prob_grad(theta_p, dataset.states[j, 0], dataset.actions[j, 0])
        for j in range(3)])
    mean_score = w @ scores
    grad_w = w[:, None] * (scores - mean_score)
    w_sums = w[neighbors.indices].sum(axis=1)
    log_v = (np.log(2.0)  # 1-D unit ball volume
             + np.log(np.maximum(neighbors.radii, 1e-12)))
    c = -(1.0 + np.log(w_sums) - log_v) / 1.0
    expected = sum(c[i] * grad_w[neighbors.indices[i]].sum(axis=0)
                   for i in range(3))
    grad = iw_entropy_gradient(dataset, neighbors, policy, theta_p, theta0)
    np.testing.assert_allclose(grad, expected, rtol=1e-10)


def test_gradient_zero_mass_neighborhoods_contribute_nothing(small_instance):
    policy, theta0, dataset, neighbors = small_instance
    # push one trajectory's weights to zero
    log_r = np.zeros(dataset.n_particles)
    log_r[:dataset.horizon] = -800.0  # exp underflows to exactly 0
    wv = WeightVector.from_log_ratios(log_r)
    assert (estimators.neighborhood_weight_sums(neighbors, wv.weights) == 0).any()
    rep = entropy_iw_from_neighbors(neighbors, 2, wv)
    assert np.isfinite(rep.value)
    assert rep.n_zero_weight_neighborhoods > 0


def test_gradient_rejects_non_finite(small_instance):
    policy, theta0, dataset, neighbors = small_instance
    theta_bad = theta0.copy()
    theta_bad[0] = np.nan
    with pytest.raises(FloatingPointError):
        iw_entropy_gradient(dataset, neighbors, policy, theta_bad, theta0)
