"""Command-line interface.

Subcommands: train, eval-entropy, eval-discrete, horizon-curves, heatmap,
estimator-check. Exit codes: 0 success, 2 configuration error, 1 runtime
error.
"""

import argparse
import json
import sys

from . import __version__, experiments
from .experiments import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxent-explore",
        description="Train and evaluate maximum-entropy exploration policies.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a multi-seed training experiment")
    p_train.add_argument("--config", required=True, help="JSON config file")
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the config's base seed")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--force", action="store_true",
                         help="overwrite a non-empty output directory")
    p_train.add_argument("--sequential", action="store_true",
                         help="run seeds sequentially in-process")

    common = dict(checkpoint="path to a policy checkpoint JSON",
                  env="environment name")

    p_ent = sub.add_parser("eval-entropy", help="entropy index of a checkpoint")
    p_ent.add_argument("--checkpoint", required=True, help=common["checkpoint"])
    p_ent.add_argument("--env", required=True, help=common["env"])
    p_ent.add_argument("--horizon", type=int, required=True)
    p_ent.add_argument("--n-traj", type=int, default=20)
    p_ent.add_argument("--k", type=int, default=4)
    p_ent.add_argument("--seed", type=int, default=0)

    p_disc = sub.add_parser("eval-discrete",
                            help="discretized state-space entropy of a checkpoint")
    p_disc.add_argument("--checkpoint", required=True, help=common["checkpoint"])
    p_disc.add_argument("--env", required=True, help=common["env"])
    p_disc.add_argument("--horizon", type=int, required=True)
    p_disc.add_argument("--n-traj", type=int, default=20)
    p_disc.add_argument("--cell", type=float, default=0.05,
                        help="cell size as a fraction of the bounding box")
    p_disc.add_argument("--seed", type=int, default=0)

    p_hor = sub.add_parser("horizon-curves",
                           help="entropy vs testing horizon for trained policies")
    p_hor.add_argument("--checkpoint", action="append", required=True,
                       metavar="LABEL=PATH",
                       help="repeatable; e.g. --checkpoint 200=ckpt.json")
    p_hor.add_argument("--env", required=True, help=common["env"])
    p_hor.add_argument("--horizons", required=True,
                       help="comma-separated testing horizons")
    p_hor.add_argument("--n-traj", type=int, default=100)
    p_hor.add_argument("--k", type=int, default=4)
    p_hor.add_argument("--seed", type=int, default=0)
    p_hor.add_argument("--out", required=True, help="output CSV path")

    p_heat = sub.add_parser("heatmap", help="state-visitation log-probability grid")
    p_heat.add_argument("--checkpoint", required=True, help=common["checkpoint"])
    p_heat.add_argument("--env", required=True, help=common["env"])
    p_heat.add_argument("--horizon", type=int, required=True)
    p_heat.add_argument("--n-traj", type=int, default=100)
    p_heat.add_argument("--resolution", type=int, default=40)
    p_heat.add_argument("--seed", type=int, default=0)
    p_heat.add_argument("--out", required=True, help="output CSV path")

    p_est = sub.add_parser("estimator-check",
                           help="bias/variance tables for the entropy estimators")
    p_est.add_argument("--distribution", required=True,
                       choices=["uniform-box", "gaussian", "iw-uniform-pair",
                                "kl-pair"])
    p_est.add_argument("--n", required=True,
                       help="comma-separated sample sizes, e.g. 1000,10000")
    p_est.add_argument("--k", type=int, default=4)
    p_est.add_argument("--seeds", type=int, default=20)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.add_argument("--out", default=None, help="optional output CSV path")

    return parser


def _cmd_train(args) -> int:
    config = experiments.load_config(args.config)
    if args.seed is not None:
        config.train.seed = args.seed
    result = experiments.run_training(config, args.out, force=args.force,
                                      parallel=not args.sequential)
    print(f"wrote {len(result['seed_dirs'])} runs under {args.out}")
    print(f"aggregate: {result['aggregate_csv']}")
    return 0


def _cmd_eval_entropy(args) -> int:
    report = experiments.eval_entropy(args.checkpoint, args.env, args.horizon,
                                      args.n_traj, args.k, args.seed)
    print(json.dumps({
        "entropy_index": report.value, "k": report.k, "n": report.n_samples,
        "ess": report.ess, "mean_radius": report.mean_radius,
        "n_floored_radii": report.n_floored_radii}))
    return 0


def _cmd_eval_discrete(args) -> int:
    value = experiments.eval_discrete_entropy(
        args.checkpoint, args.env, args.horizon, args.n_traj, args.cell,
        args.seed)
    print(json.dumps({"discrete_entropy": value, "cell_size": args.cell}))
    return 0


def _cmd_horizon_curves(args) -> int:
    checkpoints = {}
    for item in args.checkpoint:
        if "=" not in item:
            raise ConfigError(f"--checkpoint expects LABEL=PATH, got {item!r}")
        label, path = item.split("=", 1)
        checkpoints[label] = path
    horizons = [int(h) for h in args.horizons.split(",") if h]
    rows = experiments.eval_horizon_curves(
        checkpoints, args.env, horizons, args.n_traj, args.k, args.seed)
    experiments.write_csv(
        args.out, ("policy", "h", "h_step_entropy", "avg_entropy"), rows,
        {"env": args.env, "seed": args.seed, "n_traj": args.n_traj, "k": args.k})
    print(f"wrote {args.out}")
    return 0


def _cmd_heatmap(args) -> int:
    grid, counts = experiments.eval_heatmap(
        args.checkpoint, args.env, args.horizon, args.n_traj, args.resolution,
        args.seed)
    experiments.save_heatmap_csv(
        args.out, grid,
        {"env": args.env, "seed": args.seed, "total_count": int(counts.sum()),
         "resolution": args.resolution,
         "sentinel": experiments.HEATMAP_SENTINEL})
    print(f"wrote {args.out}")
    return 0


def _cmd_estimator_check(args) -> int:
    n_values = [int(n) for n in args.n.split(",") if n]
    rows = experiments.estimator_check(args.distribution, n_values, args.k,
                                       args.seeds, args.seed)
    header = ("distribution", "n", "k", "n_seeds", "mean", "true", "bias",
              "variance")
    if args.out:
        experiments.write_csv(args.out, header, rows,
                              {"seed": args.seed, "n_seeds": args.seeds})
        print(f"wrote {args.out}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(x) for x in row))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval-entropy": _cmd_eval_entropy,
    "eval-discrete": _cmd_eval_discrete,
    "horizon-curves": _cmd_horizon_curves,
    "heatmap": _cmd_heatmap,
    "estimator-check": _cmd_estimator_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
