"""Training loop: entropy-index ascent inside a KL trust region.

Each epoch collects a fresh batch with the current policy, freezes the
neighborhoods and radii computed on that batch, and then repeatedly steps
the parameters along the IW entropy gradient with a constant learning
rate. After every step the KL estimate between the sampling batch and the
candidate parameters is checked: a step that breaches the threshold is
rolled back, ending the epoch's inner loop, so every parameter vector the
optimizer ever adopts provably satisfies the constraint.
"""

import csv
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import estimators, sampler
from .envs import make_env
from .policy import GaussianPolicy, PolicySpec, save_checkpoint, zero_mean_pretrain

# Named trust-region presets: the wide threshold drives the main training
# configurations; the tight one reproduces the sensitivity studies.
DELTA_PRESETS = {"table": 15.0, "sensitivity": 0.05}

_INIT_STREAM = 2 ** 40 + 1
_PRETRAIN_STREAM = 2 ** 40 + 2


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    env: str
    horizon: int                 # steps per trajectory (exploration horizon)
    n_traj: int                  # trajectories per epoch
    k: int = 4
    delta: float = 15.0          # KL trust-region threshold (nats)
    alpha: float = 1e-5          # constant learning rate
    max_inner_iters: int = 30
    epochs: int = 100
    seed: int = 0
    hidden_sizes: tuple = (300, 300)
    activation: str = "relu"
    init_logstd: float = 0.0
    dtype: str = "float64"       # policy math dtype; estimators stay float64
    pretrain: bool = True
    eps_radius: float = estimators.DEFAULT_EPS_RADIUS
    kl_ceiling: float = estimators.DEFAULT_KL_CEILING
    normalize_obs: bool = False  # condition network inputs with the env's
                                 # suggested affine transform
    env_kwargs: dict = field(default_factory=dict)
    checkpoint_every: int = 0    # epochs between checkpoints; 0 disables
    out_dir: str = ""            # where checkpoints/diagnostics go, if any

    def __post_init__(self):
        if self.delta in DELTA_PRESETS:
            self.delta = DELTA_PRESETS[self.delta]
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if not (self.delta > 0 and self.alpha >= 0 and self.max_inner_iters >= 1):
            raise ValueError("need delta > 0, alpha >= 0, max_inner_iters >= 1")
        if not self.delta < self.kl_ceiling:
            raise ValueError("delta must be below kl_ceiling")
        if self.horizon < 1 or self.n_traj < 1 or self.epochs < 0:
            raise ValueError("horizon, n_traj must be >= 1 and epochs >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    entropy_index: float     # plain k-NN entropy of the epoch's fresh batch
    inner_iters: int         # accepted inner steps
    final_kl: float          # KL of the last accepted iterate (0 if none)
    env_samples: int         # cumulative environment steps
    seconds: float           # wall-clock time for the epoch


@dataclass
class TrainLog:
    seed: int
    records: list = field(default_factory=list)

    CSV_COLUMNS = ("epoch", "entropy_index", "inner_iters", "final_kl",
                   "env_samples", "seconds", "seed")

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(self.CSV_COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.entropy_index), r.inner_iters,
                                 repr(r.final_kl), r.env_samples,
                                 repr(r.seconds), self.seed])

    def entropy_trace(self) -> np.ndarray:
        return np.array([r.entropy_index for r in self.records])


def _dump_diagnostics(config: TrainConfig, epoch: int, dataset, neighbors,
                      weights) -> str:
    path = (f"{config.out_dir or '.'}/diagnostics_epoch{epoch}"
            f"_seed{config.seed}.npz")
    np.savez(path, particles=dataset.particles, radii=neighbors.radii,
             neighbor_indices=neighbors.indices,
             weights=None if weights is None else weights.weights)
    return path


def inner_step(dataset, neighbors, policy, theta_h, theta0, config: TrainConfig):
    """One trust-region ascent step from theta_h.

    Returns (theta_next, kl_estimate, accepted). theta_h is never
    modified; a rejected proposal simply leaves the caller holding the
    previous iterate, which makes rollback exact by construction. A
    proposal whose weights cannot even be evaluated (overflow from an
    oversized step) counts as infinitely divergent and is rejected; a
    non-finite gradient at the current iterate is a genuine fault and
    propagates.
    """
    grad = estimators.iw_entropy_gradient(
        dataset, neighbors, policy, theta_h, theta0,
        eps_radius=config.eps_radius)
    theta_next = theta_h + policy.dtype.type(config.alpha) * grad.astype(policy.dtype)
    rejected_kl = estimators.KlEstimate(value=config.kl_ceiling, capped=True)
    if not np.isfinite(theta_next).all():
        return theta_h, rejected_kl, False
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            wv = sampler.log_ratios(dataset, policy, theta_next, theta0)
    except FloatingPointError:
        return theta_h, rejected_kl, False
    kl = estimators.kl_from_neighbors(neighbors, wv, config.kl_ceiling)
    return theta_next, kl, bool(kl.value <= config.delta)


def _run_inner_loop(dataset, neighbors, policy, theta0, config: TrainConfig):
    """Inner loop of one epoch, reusing forward passes across steps.

    Numerically identical to iterating `inner_step` (same operations in
    the same order), but the sampling-side log-probs are computed once and
    each iteration runs exactly one forward and one backward pass: the
    proposal's forward pass doubles as the KL check and as the next
    gradient evaluation.
    """
    steps_s = dataset.step_states
    steps_a = dataset.step_actions
    shape = (dataset.n_traj, dataset.horizon)
    p = dataset.particles.shape[1]
    alpha = policy.dtype.type(config.alpha)

    def weight_vector(lp_steps):
        per_step = (lp_steps - lp0).reshape(shape)
        return sampler.WeightVector.from_log_ratios(
            np.cumsum(per_step, axis=1).reshape(-1))

    cache = policy.forward_cache(theta0, steps_s)
    lp0 = np.asarray(policy.log_prob_from_cache(cache, theta0, steps_a),
                     dtype=np.float64)
    theta_h = theta0
    wv = weight_vector(lp0)

    accepted = 0
    kl_last = 0.0
    for _ in range(config.max_inner_iters):
        step_coef = estimators.iw_gradient_step_coefficients(
            neighbors, p, wv, dataset.n_traj, dataset.horizon,
            config.eps_radius)
        grad = np.asarray(
            policy.weighted_score_sum_from_cache(cache, theta_h, steps_a,
                                                 step_coef),
            dtype=np.float64)
        if not np.isfinite(grad).all():
            raise FloatingPointError("non-finite IW entropy gradient")
        theta_next = theta_h + alpha * grad.astype(policy.dtype)
        if not np.isfinite(theta_next).all():
            break  # oversized proposal: infinitely divergent, rolled back
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                cache_next = policy.forward_cache(theta_next, steps_s)
                lp_next = np.asarray(
                    policy.log_prob_from_cache(cache_next, theta_next, steps_a),
                    dtype=np.float64)
                wv_next = weight_vector(lp_next)
        except FloatingPointError:
            break
        kl = estimators.kl_from_neighbors(neighbors, wv_next, config.kl_ceiling)
        if kl.value > config.delta:
            break  # breaching step rolled back; epoch done
        theta_h, cache, wv = theta_next, cache_next, wv_next
        accepted += 1
        kl_last = kl.value
        assert kl_last <= config.delta, "accepted iterate outside trust region"
    return theta_h, accepted, kl_last


def policy_spec_for(env, config: TrainConfig) -> PolicySpec:
    """Policy architecture implied by a training config and environment."""
    normalize = config.normalize_obs
    return PolicySpec(
        input_dim=env.spec.obs_dim, output_dim=env.spec.action_dim,
        hidden_sizes=config.hidden_sizes, activation=config.activation,
        init_logstd=config.init_logstd,
        obs_loc=env.spec.obs_loc if normalize else (),
        obs_scale=env.spec.obs_scale if normalize else ())


def train(config: TrainConfig, on_epoch=None):
    """Run the full training loop; returns (params, TrainLog)."""
    env = make_env(config.env, **config.env_kwargs)
    spec = policy_spec_for(env, config)
    policy = GaussianPolicy(spec, dtype=np.dtype(config.dtype))
    params = policy.init_params(np.random.default_rng([config.seed, _INIT_STREAM]))

    if config.pretrain:
        warmup = sampler.collect(
            policy, params, env, horizon=min(config.horizon, 100),
            n_traj=min(config.n_traj, 10),
            master_seed=_mix_seed(config.seed, _PRETRAIN_STREAM))
        states = warmup.states.reshape(-1, env.spec.obs_dim)
        params = zero_mean_pretrain(policy, params, states)

    log = TrainLog(seed=config.seed)
    env_samples = 0
    for epoch in range(1, config.epochs + 1):
        t_start = time.perf_counter()
        dataset = sampler.collect(policy, params, env, config.horizon,
                                  config.n_traj,
                                  master_seed=_mix_seed(config.seed, epoch))
        env_samples += config.n_traj * config.horizon

        # Neighborhoods and radii are computed once from this batch and
        # held fixed through the inner loop.
        index = estimators.build_index(dataset.particles)
        neighbors = estimators.knn_query(index, config.k)
        report = estimators.entropy_from_neighbors(
            neighbors, dataset.particles.shape[1], config.eps_radius)
        if not np.isfinite(report.value):
            path = _dump_diagnostics(config, epoch, dataset, neighbors, None)
            raise FloatingPointError(
                f"non-finite entropy index at epoch {epoch}; diagnostics in {path}")

        theta0 = params
        try:
            theta_h, accepted, kl_last = _run_inner_loop(
                dataset, neighbors, policy, theta0, config)
        except FloatingPointError:
            wv = sampler.log_ratios(dataset, policy, theta0, theta0)
            path = _dump_diagnostics(config, epoch, dataset, neighbors, wv)
            raise FloatingPointError(
                f"non-finite inner-loop quantity at epoch {epoch}; "
                f"diagnostics in {path}")

        params = theta_h
        record = EpochRecord(epoch=epoch, entropy_index=report.value,
                             inner_iters=accepted, final_kl=kl_last,
                             env_samples=env_samples,
                             seconds=time.perf_counter() - t_start)
        log.append(record)
        if on_epoch is not None:
            on_epoch(record, params)
        if (config.checkpoint_every and config.out_dir
                and epoch % config.checkpoint_every == 0):
            save_checkpoint(f"{config.out_dir}/checkpoint_epoch{epoch}.json",
                            spec, np.asarray(params, dtype=np.float64),
                            seed=config.seed, epoch=epoch)

    return params, log


def _mix_seed(seed: int, stream: int) -> int:
    # Distinct, deterministic master seeds per (run seed, purpose/epoch).
    return (seed * 1_000_003 + stream) % (2 ** 63)


def config_to_dict(config: TrainConfig) -> dict:
    return asdict(config)
