"""Non-parametric entropy and KL estimators over particle datasets.

All estimators are built from k-NN radii: the plain estimator scores a
sample from the distribution itself, the importance-weighted (IW) variant
rescores the same sample toward a target distribution through normalized
importance weights, and the companion KL estimator measures how far the
weights have drifted from uniform. The gradient of the IW estimator with
respect to the target-policy parameters flows only through the
neighborhood weight sums; particle positions, neighborhoods, and radii
stay fixed.

Numerical conventions (applied consistently everywhere):
- radii below `eps_radius` are floored before logs (duplicate states
  otherwise produce -inf);
- a neighborhood with zero total weight contributes 0 to the IW entropy
  (the x ln x -> 0 limit) and caps the KL estimate at `kl_ceiling`;
- reductions run in float64 with numpy's fixed-order pairwise summation,
  so results are bitwise reproducible for a given configuration.
"""

from dataclasses import dataclass

import numpy as np

from . import sampler as _sampler
from .knn import NeighborResult, build_index, knn_query, log_unit_ball_volume
from .sampler import ParticleDataset, WeightVector
from .specials import digamma

DEFAULT_EPS_RADIUS = 1e-12
DEFAULT_KL_CEILING = 1e6


@dataclass(frozen=True)
class EntropyReport:
    """k-NN entropy value plus estimation diagnostics."""

    value: float         # nats
    k: int
    n_samples: int
    ess: float           # effective sample size of the weights used
    mean_radius: float
    n_floored_radii: int = 0
    n_zero_weight_neighborhoods: int = 0


@dataclass(frozen=True)
class KlEstimate:
    value: float         # nats
    n_zero_weight_neighborhoods: int = 0
    capped: bool = False


def _log_volumes(radii: np.ndarray, p: int, eps_radius: float) -> np.ndarray:
    floored = np.maximum(radii, eps_radius)
    return log_unit_ball_volume(p) + p * np.log(floored)


def neighborhood_weight_sums(neighbors: NeighborResult,
                             weights: np.ndarray) -> np.ndarray:
    """W_i: total normalized weight of each point's k nearest neighbors."""
    return np.asarray(weights, dtype=np.float64)[neighbors.indices].sum(axis=1)


# -- plain estimator ----------------------------------------------------------


def entropy_from_neighbors(neighbors: NeighborResult, p: int,
                           eps_radius: float = DEFAULT_EPS_RADIUS) -> EntropyReport:
    n = neighbors.radii.shape[0]
    k = neighbors.k
    log_v = _log_volumes(neighbors.radii, p, eps_radius)
    value = float(np.mean(np.log(n) + log_v - np.log(k)) + np.log(k) - digamma(k))
    return EntropyReport(
        value=value, k=k, n_samples=n, ess=float(n),
        mean_radius=float(neighbors.radii.mean()),
        n_floored_radii=int((neighbors.radii < eps_radius).sum()))


def entropy_knn(points: np.ndarray, k: int,
                eps_radius: float = DEFAULT_EPS_RADIUS) -> EntropyReport:
    """k-NN differential entropy estimate of the sampling distribution."""
    points = np.asarray(points, dtype=np.float64)
    neighbors = knn_query(build_index(points), k)
    return entropy_from_neighbors(neighbors, points.shape[1], eps_radius)


# -- importance-weighted estimator --------------------------------------------


def entropy_iw_from_neighbors(neighbors: NeighborResult, p: int,
                              weights: WeightVector,
                              eps_radius: float = DEFAULT_EPS_RADIUS) -> EntropyReport:
    n = neighbors.radii.shape[0]
    k = neighbors.k
    w_sums = neighborhood_weight_sums(neighbors, weights.weights)
    log_v = _log_volumes(neighbors.radii, p, eps_radius)
    pos = w_sums > 0.0
    terms = np.zeros(n)
    terms[pos] = (w_sums[pos] / k) * (np.log(w_sums[pos]) - log_v[pos])
    value = float(-terms.sum() + np.log(k) - digamma(k))
    return EntropyReport(
        value=value, k=k, n_samples=n, ess=weights.ess,
        mean_radius=float(neighbors.radii.mean()),
        n_floored_radii=int((neighbors.radii < eps_radius).sum()),
        n_zero_weight_neighborhoods=int(n - pos.sum()))


def entropy_knn_iw(points: np.ndarray, weights: WeightVector, k: int,
                   eps_radius: float = DEFAULT_EPS_RADIUS) -> EntropyReport:
    """IW k-NN entropy estimate of the target distribution behind `weights`."""
    points = np.asarray(points, dtype=np.float64)
    _check_weights(points.shape[0], weights)
    neighbors = knn_query(build_index(points), k)
    return entropy_iw_from_neighbors(neighbors, points.shape[1], weights, eps_radius)


def kl_from_neighbors(neighbors: NeighborResult, weights: WeightVector,
                      kl_ceiling: float = DEFAULT_KL_CEILING) -> KlEstimate:
    n = neighbors.radii.shape[0]
    k = neighbors.k
    w_sums = neighborhood_weight_sums(neighbors, weights.weights)
    n_zero = int((w_sums == 0.0).sum())
    if n_zero > 0:
        return KlEstimate(value=kl_ceiling, n_zero_weight_neighborhoods=n_zero,
                          capped=True)
    value = float(np.mean(np.log(k / n) - np.log(w_sums)))
    if value > kl_ceiling:
        return KlEstimate(value=kl_ceiling, capped=True)
    return KlEstimate(value=value)


def kl_knn_iw(points: np.ndarray, weights: WeightVector, k: int,
              kl_ceiling: float = DEFAULT_KL_CEILING) -> KlEstimate:
    """IW k-NN estimate of KL(sampling || target), from sampling-side points.

    Zero as the weights approach uniform, grows as they degenerate, and
    caps at `kl_ceiling` once any neighborhood loses all target mass.
    """
    points = np.asarray(points, dtype=np.float64)
    _check_weights(points.shape[0], weights)
    neighbors = knn_query(build_index(points), k)
    return kl_from_neighbors(neighbors, weights, kl_ceiling)


def _check_weights(n: int, weights: WeightVector) -> None:
    if weights.weights.shape != (n,):
        raise ValueError(f"weights have shape {weights.weights.shape}, expected ({n},)")
    if abs(float(weights.weights.sum()) - 1.0) > 1e-9:
        raise ValueError("weights are not normalized")


# -- gradient of the IW estimator ---------------------------------------------


def _neighborhood_coefficients(neighbors: NeighborResult, p: int,
                               w_sums: np.ndarray, eps_radius: float,
                               use_volume_term: bool) -> np.ndarray:
    """d(-IW entropy term)/dW_i, zero where the neighborhood has no mass.

    The default inner term is 1 + ln(W_i / V_i), the calculus derivative
    of W ln(W/V); `use_volume_term` swaps the additive 1 for the sphere
    volume V_i (diagnostic variant, fails finite-difference checks).
    """
    k = neighbors.k
    log_v = _log_volumes(neighbors.radii, p, eps_radius)
    c = np.zeros_like(w_sums)
    pos = w_sums > 0.0
    log_ratio = np.log(w_sums[pos]) - log_v[pos]
    if use_volume_term:
        c[pos] = -(np.exp(log_v[pos]) + log_ratio) / k
    else:
        c[pos] = -(1.0 + log_ratio) / k
    return c


def iw_gradient_step_coefficients(neighbors: NeighborResult, p: int,
                                  weights: WeightVector, n_traj: int,
                                  horizon: int,
                                  eps_radius: float = DEFAULT_EPS_RADIUS,
                                  use_volume_term: bool = False) -> np.ndarray:
    """Per-step coefficients that turn score gradients into the IW
    entropy gradient.

    Collapsing the chain rule through the normalized weights gives the
    gradient as sum_steps coef[j, z] * grad log pi(a_z | s_z); this
    computes coef without materializing per-particle score sums.
    """
    w = weights.weights
    w_sums = neighborhood_weight_sums(neighbors, w)
    c = _neighborhood_coefficients(neighbors, p, w_sums, eps_radius,
                                   use_volume_term)

    # Sum of coefficients over the neighborhoods each particle belongs to.
    acc = np.bincount(neighbors.indices.ravel(),
                      weights=np.repeat(c, neighbors.k), minlength=w.shape[0])
    a = w * acc
    beta = a - a.sum() * w

    # Particle (j, t) covers steps z = 0..t-1, so the coefficient of step
    # z is the tail sum of beta over t > z within the trajectory.
    beta = beta.reshape(n_traj, horizon)
    return np.cumsum(beta[:, ::-1], axis=1)[:, ::-1].reshape(-1)


def iw_entropy_gradient(dataset: ParticleDataset, neighbors: NeighborResult,
                        policy, theta_prime, theta0,
                        eps_radius: float = DEFAULT_EPS_RADIUS,
                        use_volume_term: bool = False) -> np.ndarray:
    """Exact gradient of the IW entropy estimate w.r.t. the target policy.

    Neighborhoods and radii come from the sampling-side batch and are held
    fixed; the gradient flows through the normalized weights only. The
    per-particle score sums are never materialized: the chain collapses to
    one per-step coefficient vector and a single weighted backward pass.
    """
    wv = _sampler.log_ratios(dataset, policy, theta_prime, theta0)
    step_coef = iw_gradient_step_coefficients(
        neighbors, dataset.particles.shape[1], wv, dataset.n_traj,
        dataset.horizon, eps_radius, use_volume_term)
    grad = policy.weighted_score_sum(theta_prime, dataset.step_states,
                                     dataset.step_actions, step_coef)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite IW entropy gradient")
    return grad


def iw_entropy_gradient_reference(dataset: ParticleDataset,
                                  neighbors: NeighborResult, policy,
                                  theta_prime, theta0,
                                  eps_radius: float = DEFAULT_EPS_RADIUS,
                                  use_volume_term: bool = False) -> np.ndarray:
    """Same gradient assembled from per-particle score prefix sums.

    Builds the (N, n_params) score matrix, so only suitable for small
    datasets; kept as an independently-ordered cross-check of
    `iw_entropy_gradient`.
    """
    wv = _sampler.log_ratios(dataset, policy, theta_prime, theta0)
    w = wv.weights
    p = dataset.particles.shape[1]
    w_sums = neighborhood_weight_sums(neighbors, w)
    c = _neighborhood_coefficients(neighbors, p, w_sums, eps_radius,
                                   use_volume_term)

    scores = _sampler.score_prefix_sums(dataset, policy, theta_prime)
    mean_score = w @ scores
    grad_w = w[:, None] * (scores - mean_score)   # d w_j / d theta'
    grad = np.zeros(scores.shape[1])
    for i in range(w.shape[0]):
        if c[i] != 0.0:
            grad += c[i] * grad_w[neighbors.indices[i]].sum(axis=0)
    return grad
