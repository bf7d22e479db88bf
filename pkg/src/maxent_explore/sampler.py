"""Rollout collection and importance-weight bookkeeping.

A batch of trajectories is collected in lockstep (one RNG stream per
trajectory, derived from the master seed and the trajectory index, so the
batch is reproducible regardless of scheduling). Each visited state
s_1..s_T becomes one particle; a particle at time t carries the prefix of
states s_0..s_{t-1} and actions a_0..a_{t-1} that produced it, which is
exactly what importance ratios and score sums range over.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightVector:
    """Per-particle importance log-ratios and normalized weights."""

    log_ratios: np.ndarray  # (N,) float64, ln of unnormalized ratios
    weights: np.ndarray     # (N,) float64, non-negative, sums to 1

    @classmethod
    def from_log_ratios(cls, log_ratios: np.ndarray) -> "WeightVector":
        lr = np.asarray(log_ratios, dtype=np.float64)
        if not np.isfinite(lr).all():
            bad = int(np.flatnonzero(~np.isfinite(lr))[0])
            raise FloatingPointError(f"non-finite log-ratio at particle {bad}")
        shifted = np.exp(lr - lr.max())  # max-shift keeps exp in range
        w = shifted / shifted.sum()
        return cls(log_ratios=lr, weights=w)

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(log_ratios=np.zeros(n), weights=np.full(n, 1.0 / n))

    @property
    def ess(self) -> float:
        """Effective sample size 1 / sum w^2."""
        return float(1.0 / np.sum(self.weights ** 2))


@dataclass
class ParticleDataset:
    """States visited by a trajectory batch, with replayable prefixes.

    Particle i = (traj j, time t) with i = j * T + (t - 1), t = 1..T.
    `particles` holds the states projected to the entropy features;
    `step_states`/`step_actions` hold the flat (s_z, a_z) pairs in the
    same trajectory-major order, so prefix sums are cumulative sums.
    """

    states: np.ndarray        # (n_traj, T+1, obs_dim)
    actions: np.ndarray       # (n_traj, T, action_dim)
    particles: np.ndarray     # (n_traj*T, p) float64
    feature_indices: tuple
    master_seed: int

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    @property
    def n_particles(self) -> int:
        return self.n_traj * self.horizon

    @property
    def step_states(self) -> np.ndarray:
        """(n_traj*T, obs_dim): state s_z at which action a_z was taken."""
        return self.states[:, :-1, :].reshape(self.n_particles, -1)

    @property
    def step_actions(self) -> np.ndarray:
        return self.actions.reshape(self.n_particles, -1)


def collect(policy, params, env, horizon: int, n_traj: int,
            master_seed: int) -> ParticleDataset:
    """Roll `n_traj` trajectories of exactly `horizon` steps with the policy.

    Noise and reset draws come from per-trajectory generators seeded with
    (master_seed, trajectory index); the batch is bitwise reproducible.
    """
    if horizon < 1 or n_traj < 1:
        raise ValueError("horizon and n_traj must be >= 1")
    obs_dim, act_dim = env.spec.obs_dim, env.spec.action_dim

    starts = np.empty((n_traj, obs_dim))
    noise = np.empty((n_traj, horizon, act_dim))
    for j in range(n_traj):
        rng = np.random.default_rng([master_seed, j])
        starts[j] = env.reset(rng, 1)[0]
        noise[j] = rng.standard_normal((horizon, act_dim))

    dtype = policy.dtype
    states = np.empty((n_traj, horizon + 1, obs_dim), dtype=dtype)
    actions = np.empty((n_traj, horizon, act_dim), dtype=dtype)
    states[:, 0] = starts.astype(dtype)
    cur = states[:, 0]
    for t in range(horizon):
        a = policy.act_batch(params, cur, noise[:, t].astype(dtype))
        nxt = env.step(np.asarray(cur, dtype=np.float64),
                       np.asarray(a, dtype=np.float64)).astype(dtype)
        actions[:, t] = a
        states[:, t + 1] = nxt
        cur = nxt

    feat = tuple(env.spec.entropy_feature_indices)
    particles = np.asarray(states[:, 1:, :], dtype=np.float64)[:, :, feat]
    particles = particles.reshape(n_traj * horizon, len(feat))
    return ParticleDataset(states=states, actions=actions, particles=particles,
                           feature_indices=feat, master_seed=master_seed)


def step_log_ratios(dataset: ParticleDataset, policy, theta_prime,
                    theta0) -> np.ndarray:
    """(n_traj, T) per-step log density ratios ln pi'(a|s) - ln pi(a|s)."""
    lp_new = policy.log_prob_batch(theta_prime, dataset.step_states,
                                   dataset.step_actions)
    lp_old = policy.log_prob_batch(theta0, dataset.step_states,
                                   dataset.step_actions)
    out = np.asarray(lp_new, dtype=np.float64) - np.asarray(lp_old, dtype=np.float64)
    return out.reshape(dataset.n_traj, dataset.horizon)


def log_ratios(dataset: ParticleDataset, policy, theta_prime,
               theta0) -> WeightVector:
    """Per-particle prefix log-ratios, normalized into importance weights.

    The particle at time t covers actions z = 0..t-1 (those that produced
    s_t), so its log-ratio is the cumulative sum of per-step log-ratios.
    """
    per_step = step_log_ratios(dataset, policy, theta_prime, theta0)
    prefix = np.cumsum(per_step, axis=1)
    return WeightVector.from_log_ratios(prefix.reshape(-1))


def score_prefix_sums(dataset: ParticleDataset, policy, theta_prime) -> np.ndarray:
    """(N, n_params) per-particle sums of score gradients over the prefix.

    Materializes one parameter-sized row per particle; reference path for
    small datasets (the production gradient never builds this matrix).
    """
    per_step = policy.log_prob_grad_batch(theta_prime, dataset.step_states,
                                          dataset.step_actions)
    per_step = np.asarray(per_step, dtype=np.float64)
    per_step = per_step.reshape(dataset.n_traj, dataset.horizon, -1)
    return np.cumsum(per_step, axis=1).reshape(dataset.n_particles, -1)


def dump_particles_csv(dataset: ParticleDataset, path) -> None:
    """Particle dump for offline visitation maps."""
    p = dataset.particles.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["traj_id", "t"] + [f"feature_{d}" for d in range(p)])
        for i in range(dataset.n_particles):
            j, t = divmod(i, dataset.horizon)
            writer.writerow([j, t + 1] + [repr(float(x)) for x in dataset.particles[i]])
