"""Experiment harness: config files, multi-seed runs, evaluation metrics.

Runs are driven by a JSON config (schema below); seeds execute as
independent jobs, in parallel up to the MEPOL_THREADS environment
variable. Every CSV artifact gets a header row and a JSON metadata
sidecar recording the config hash, seed, and code version.

Config keys (* = required):
  env*            environment name: gridworld | gridworld-open | mountaincar | ndgrid
  horizon*        trajectory length per epoch (training horizon)
  n_traj*         trajectories per epoch
  k               neighbor count (default 4)
  delta           KL threshold in nats, or preset name "table" / "sensitivity"
  alpha           learning rate
  max_inner_iters inner steps cap per epoch (default 30)
  epochs          outer epochs
  seed            base seed (default 0); run s uses seed + s
  n_seeds         number of runs (default 1)
  hidden_sizes    policy hidden layer widths (default [300, 300])
  activation      relu | tanh
  init_logstd     initial log standard deviation (default 0.0)
  dtype           float64 | float32 (policy math; estimators stay float64)
  pretrain        zero-mean pretraining on/off (default true)
  env_kwargs      extra environment constructor arguments
  checkpoint_every  epochs between checkpoints (default: final only)
  eval_horizons   testing horizons for horizon-curves (optional)
  heatmap_resolution  cells per axis for heatmaps (default 40)
  cell_size       discretization cell size as a fraction of the bounding
                  box per axis (default 0.05, i.e. a 20x20 grid)
"""

import dataclasses
import hashlib
import json
import math
import multiprocessing
import os
import shutil
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from . import __version__, estimators, sampler
from .envs import env_names, make_env
from .optimizer import DELTA_PRESETS, TrainConfig, policy_spec_for, train
from .policy import GaussianPolicy, load_checkpoint, save_checkpoint
from .sampler import WeightVector


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    train: TrainConfig
    n_seeds: int = 1
    eval_horizons: tuple = ()
    heatmap_resolution: int = 40
    cell_size: float = 0.05
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if self.heatmap_resolution < 2:
            raise ConfigError("heatmap_resolution must be >= 2")
        if not 0.0 < self.cell_size <= 0.5:
            raise ConfigError("cell_size must be in (0, 0.5]")


_REQUIRED_KEYS = ("env", "horizon", "n_traj")
_OPTIONAL_KEYS = {
    "k": int, "delta": None, "alpha": float, "max_inner_iters": int,
    "epochs": int, "seed": int, "n_seeds": int, "hidden_sizes": list,
    "activation": str, "init_logstd": float, "dtype": str, "pretrain": bool,
    "normalize_obs": bool, "env_kwargs": dict, "checkpoint_every": int,
    "eval_horizons": list, "heatmap_resolution": int, "cell_size": float,
}


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required config key: {key!r}")
    unknown = set(raw) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if raw["env"] not in env_names():
        raise ConfigError(f"unknown env {raw['env']!r}; known: {env_names()}")

    delta = raw.get("delta", 15.0)
    if isinstance(delta, str):
        if delta not in DELTA_PRESETS:
            raise ConfigError(
                f"unknown delta preset {delta!r}; known: {sorted(DELTA_PRESETS)}")
        delta = DELTA_PRESETS[delta]

    try:
        train_cfg = TrainConfig(
            env=raw["env"], horizon=int(raw["horizon"]), n_traj=int(raw["n_traj"]),
            k=int(raw.get("k", 4)), delta=float(delta),
            alpha=float(raw.get("alpha", 1e-5)),
            max_inner_iters=int(raw.get("max_inner_iters", 30)),
            epochs=int(raw.get("epochs", 100)), seed=int(raw.get("seed", 0)),
            hidden_sizes=tuple(raw.get("hidden_sizes", (300, 300))),
            activation=raw.get("activation", "relu"),
            init_logstd=float(raw.get("init_logstd", 0.0)),
            dtype=raw.get("dtype", "float64"),
            pretrain=bool(raw.get("pretrain", True)),
            normalize_obs=bool(raw.get("normalize_obs", False)),
            env_kwargs=dict(raw.get("env_kwargs", {})),
            checkpoint_every=int(raw.get("checkpoint_every", 0)),
        )
        return ExperimentConfig(
            train=train_cfg,
            n_seeds=int(raw.get("n_seeds", 1)),
            eval_horizons=tuple(raw.get("eval_horizons", ())),
            heatmap_resolution=int(raw.get("heatmap_resolution", 40)),
            cell_size=float(raw.get("cell_size", 0.05)),
            checkpoint_every=int(raw.get("checkpoint_every", 0)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}") from None


def config_hash(config: ExperimentConfig) -> str:
    doc = dataclasses.asdict(config)
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


# -- artifact helpers ---------------------------------------------------------


def write_csv(path, header, rows, meta: dict) -> None:
    """CSV with full-precision floats plus a JSON metadata sidecar."""
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(
                repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
    sidecar = dict(meta)
    sidecar.setdefault("code_version", __version__)
    with open(f"{path}.meta.json", "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)


def mean_ci95(values: np.ndarray):
    """Mean and 95% t-interval half-width (0 for a single value)."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    mean = float(values.mean())
    if n < 2:
        return mean, 0.0
    sem = float(values.std(ddof=1)) / math.sqrt(n)
    t_crit = float(_scipy_stats.t.ppf(0.975, n - 1))
    return mean, t_crit * sem


def max_workers() -> int:
    env_cap = os.environ.get("MEPOL_THREADS")
    if env_cap:
        return max(1, int(env_cap))
    return max(1, os.cpu_count() or 1)


# -- multi-seed training ------------------------------------------------------


def _seed_worker(args):
    config_dict, seed, seed_dir, limit_threads = args
    if limit_threads:
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(1)
        except ImportError:
            pass
    cfg = TrainConfig(**{**config_dict, "seed": seed, "out_dir": seed_dir})
    params, log = train(cfg)
    log.to_csv(os.path.join(seed_dir, "trainlog.csv"))
    env = make_env(cfg.env, **cfg.env_kwargs)
    pol_spec = policy_spec_for(env, cfg)
    save_checkpoint(os.path.join(seed_dir, "checkpoint_final.json"), pol_spec,
                    np.asarray(params, dtype=np.float64), seed=seed,
                    epoch=cfg.epochs)
    return seed, [dataclasses.astuple(r) for r in log.records]


def run_training(config: ExperimentConfig, out_dir, force: bool = False,
                 parallel: bool = True) -> dict:
    """Train `n_seeds` runs; write per-seed logs/checkpoints + aggregate CSV.

    Returns {"seed_dirs": [...], "aggregate_csv": path}.
    """
    if os.path.exists(out_dir) and os.listdir(out_dir):
        if not force:
            raise ConfigError(
                f"output directory {out_dir} is not empty (use --force)")
        shutil.rmtree(out_dir)
    os.makedirs(out_dir, exist_ok=True)

    chash = config_hash(config)
    base = dataclasses.asdict(config.train)
    base["checkpoint_every"] = config.checkpoint_every
    seeds = [config.train.seed + s for s in range(config.n_seeds)]
    seed_dirs = []
    jobs = []
    n_proc = min(len(seeds), max_workers())
    for seed in seeds:
        seed_dir = os.path.join(out_dir, f"seed_{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        seed_dirs.append(seed_dir)
        job = dict(base)
        job.pop("seed")
        job.pop("out_dir")
        jobs.append((job, seed, seed_dir, n_proc > 1))

    if parallel and n_proc > 1:
        # fork: workers inherit the imported stack and re-seed explicitly;
        # spawn would re-import the caller's __main__, which breaks
        # interactive and stdin-driven parents.
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=n_proc) as pool:
            results = pool.map(_seed_worker, jobs)
    else:
        results = [_seed_worker(j) for j in jobs]

    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump({"config": dataclasses.asdict(config), "config_hash": chash,
                   "code_version": __version__, "seeds": seeds},
                  f, indent=2, sort_keys=True, default=str)

    # Aggregate: mean and 95% CI of the entropy index per epoch.
    per_seed = {seed: records for seed, records in results}
    n_epochs = config.train.epochs
    rows = []
    for e in range(n_epochs):
        values = np.array([per_seed[s][e][1] for s in seeds])
        mean, half = mean_ci95(values)
        env_samples = per_seed[seeds[0]][e][4]
        rows.append((e + 1, mean, half, env_samples, len(seeds)))
    agg_path = os.path.join(out_dir, "aggregate.csv")
    write_csv(agg_path,
              ("epoch", "entropy_index_mean", "entropy_index_ci95",
               "env_samples", "n_seeds"),
              rows, {"config_hash": chash, "seeds": seeds})
    return {"seed_dirs": seed_dirs, "aggregate_csv": agg_path}


# -- evaluation ----------------------------------------------------------------


def _load_policy(checkpoint_path, env, dtype="float64"):
    spec, params, _, _ = load_checkpoint(checkpoint_path)
    if spec.input_dim != env.spec.obs_dim or spec.output_dim != env.spec.action_dim:
        raise ConfigError(
            f"checkpoint dims ({spec.input_dim}, {spec.output_dim}) do not match "
            f"env {env.spec.name} ({env.spec.obs_dim}, {env.spec.action_dim})")
    policy = GaussianPolicy(spec, dtype=np.dtype(dtype))
    return policy, params.astype(policy.dtype)


def eval_entropy(checkpoint_path, env_name, horizon, n_traj, k, seed,
                 env_kwargs=None):
    """Entropy index of a stored policy on one fresh batch."""
    env = make_env(env_name, **(env_kwargs or {}))
    policy, params = _load_policy(checkpoint_path, env)
    ds = sampler.collect(policy, params, env, horizon, n_traj, master_seed=seed)
    return estimators.entropy_knn(ds.particles, k)


def discrete_entropy(points, bounds, cell_size: float) -> float:
    """Shannon entropy of visit counts over a fixed 2-D grid (nats).

    `cell_size` is a fraction of each axis of the bounding box, so the
    grid is comparable across environments with different scales.
    """
    points = np.asarray(points, dtype=np.float64)[:, :2]
    n_bins = max(2, int(round(1.0 / cell_size)))
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    counts, _, _ = np.histogram2d(
        points[:, 0], points[:, 1], bins=n_bins,
        range=[[x_lo, x_hi], [y_lo, y_hi]])
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def eval_discrete_entropy(checkpoint_path, env_name, horizon, n_traj,
                          cell_size, seed, env_kwargs=None) -> float:
    env = make_env(env_name, **(env_kwargs or {}))
    if len(env.spec.entropy_feature_indices) < 2:
        raise ConfigError("discretized entropy needs 2 designated spatial dims")
    policy, params = _load_policy(checkpoint_path, env)
    ds = sampler.collect(policy, params, env, horizon, n_traj, master_seed=seed)
    return discrete_entropy(ds.particles, env.spec.heatmap_bounds, cell_size)


def eval_horizon_curves(checkpoints: dict, env_name, horizons, n_traj, k, seed,
                        env_kwargs=None):
    """H(d_h) and H(d-bar_h) per testing horizon for each stored policy.

    `checkpoints` maps a label (typically the training horizon) to a
    checkpoint path. Rows: (policy_label, h, h_step_entropy, avg_entropy).
    """
    horizons = sorted(int(h) for h in horizons)
    if not horizons or horizons[0] < 1:
        raise ConfigError("horizons must be positive")
    env = make_env(env_name, **(env_kwargs or {}))
    h_max = horizons[-1]
    rows = []
    for label in sorted(checkpoints):
        policy, params = _load_policy(checkpoints[label], env)
        ds = sampler.collect(policy, params, env, h_max, n_traj, master_seed=seed)
        per_step = ds.particles.reshape(ds.n_traj, ds.horizon, -1)
        for h in horizons:
            step_cloud = per_step[:, h - 1, :]
            pooled = per_step[:, :h, :].reshape(ds.n_traj * h, -1)
            k_step = min(k, step_cloud.shape[0] - 1)
            h_step = estimators.entropy_knn(step_cloud, k_step).value
            h_avg = estimators.entropy_knn(pooled, k).value
            rows.append((label, h, h_step, h_avg))
    return rows


HEATMAP_SENTINEL = -25.0  # stands in for log(0) in empty cells


def heatmap_grid(points, bounds, resolution: int):
    """Log-probability visitation grid over the fixed bounding box.

    Returns (grid, counts): grid[i, j] = ln(count / total) or the sentinel
    for empty cells; row i indexes the first feature axis.
    """
    points = np.asarray(points, dtype=np.float64)[:, :2]
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    counts, _, _ = np.histogram2d(
        points[:, 0], points[:, 1], bins=resolution,
        range=[[x_lo, x_hi], [y_lo, y_hi]])
    total = counts.sum()
    grid = np.full_like(counts, HEATMAP_SENTINEL)
    occupied = counts > 0
    grid[occupied] = np.log(counts[occupied] / total)
    return grid, counts


def eval_heatmap(checkpoint_path, env_name, horizon, n_traj, resolution, seed,
                 env_kwargs=None):
    env = make_env(env_name, **(env_kwargs or {}))
    policy, params = _load_policy(checkpoint_path, env)
    ds = sampler.collect(policy, params, env, horizon, n_traj, master_seed=seed)
    return heatmap_grid(ds.particles, env.spec.heatmap_bounds, resolution)


def save_heatmap_csv(path, grid, meta: dict) -> None:
    header = [f"col_{j}" for j in range(grid.shape[1])]
    rows = [tuple(float(x) for x in row) for row in grid]
    write_csv(path, header, rows, meta)


# -- estimator validation -------------------------------------------------------


def _two_level_density_samples(rng, n):
    """Sampling U([0,1]) with target two-level density on [0,1].

    The target puts 1 - sqrt(3)/2 density on the left half and
    1 + sqrt(3)/2 on the right, which makes KL(sampling || target)
    exactly ln 2 with a bounded importance ratio.
    """
    x = rng.uniform(0.0, 1.0, size=(n, 1))
    c_left = 1.0 - math.sqrt(3.0) / 2.0
    c_right = 1.0 + math.sqrt(3.0) / 2.0
    ratios = np.where(x[:, 0] < 0.5, c_left, c_right)
    return x, np.log(ratios)


KL_PAIR_TRUE_VALUE = math.log(2.0)


def estimator_check(distribution: str, n_values, k: int, n_seeds: int,
                    seed: int = 0):
    """Bias/variance table for one estimator scenario across sample sizes.

    Scenarios: uniform-box (plain estimator, true entropy 0), gaussian
    (plain, true 0.5 ln 2 pi e), iw-uniform-pair (IW entropy of U([0,1])
    target from U([0,2]) samples, true 0), kl-pair (KL of the two-level
    pair, true ln 2). Rows: (distribution, N, k, n_seeds, mean, true,
    bias, variance).
    """
    rows = []
    for n in n_values:
        values = []
        for s in range(n_seeds):
            rng = np.random.default_rng([seed, s, n])
            if distribution == "uniform-box":
                pts = rng.uniform(0.0, 1.0, size=(n, 2))
                values.append(estimators.entropy_knn(pts, k).value)
                true = 0.0
            elif distribution == "gaussian":
                pts = rng.standard_normal((n, 1))
                values.append(estimators.entropy_knn(pts, k).value)
                true = 0.5 * math.log(2.0 * math.pi * math.e)
            elif distribution == "iw-uniform-pair":
                pts = rng.uniform(0.0, 2.0, size=(n, 1))
                log_r = np.where(pts[:, 0] < 1.0, math.log(2.0), -np.inf)
                shifted = np.exp(log_r - log_r.max())
                wv = WeightVector(log_ratios=log_r, weights=shifted / shifted.sum())
                values.append(estimators.entropy_knn_iw(pts, wv, k).value)
                true = 0.0
            elif distribution == "kl-pair":
                pts, log_r = _two_level_density_samples(rng, n)
                wv = WeightVector.from_log_ratios(log_r)
                values.append(estimators.kl_knn_iw(pts, wv, k).value)
                true = KL_PAIR_TRUE_VALUE
            else:
                raise ConfigError(f"unknown distribution {distribution!r}")
        arr = np.array(values)
        rows.append((distribution, n, k, n_seeds, float(arr.mean()), true,
                     float(arr.mean() - true), float(arr.var(ddof=1)) if n_seeds > 1 else 0.0))
    return rows
