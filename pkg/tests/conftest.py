import numpy as np
import pytest

from maxent_explore import estimators, sampler
from maxent_explore.envs import make_env
from maxent_explore.policy import GaussianPolicy, PolicySpec


@pytest.fixture(scope="session")
def small_instance():
    """Tiny rollout dataset with neighborhoods, for estimator tests."""
    env = make_env("ndgrid", dim=2)
    spec = PolicySpec(input_dim=2, output_dim=2, hidden_sizes=(8,),
                      activation="tanh")
    policy = GaussianPolicy(spec)
    theta0 = policy.init_params(np.random.default_rng(3))
    dataset = sampler.collect(policy, theta0, env, horizon=8, n_traj=5,
                              master_seed=11)
    neighbors = estimators.knn_query(
        estimators.build_index(dataset.particles), 4)
    return policy, theta0, dataset, neighbors


def finite_difference_gradient(fn, theta, eps=1e-5):
    """Central finite differences of a scalar function of a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += eps
        dn = theta.copy()
        dn[i] -= eps
        grad[i] = (fn(up) - fn(dn)) / (2.0 * eps)
    return grad


def sup_relative_error(candidate, reference):
    scale = max(float(np.abs(reference).max()), 1e-12)
    return float(np.abs(candidate - reference).max()) / scale
