#!/usr/bin/env python3
"""Training-horizon study on GridWorld.

Trains one policy per training horizon, then sweeps a testing-horizon
grid and writes the per-step and averaged entropy curves to CSV. Shows
the short-horizon policy peaking early and falling behind at long
testing horizons.
"""

import argparse
import json
import os
import sys
import tempfile

from maxent_explore.cli import main as cli_main

BASE = {
    "env": "gridworld", "n_traj": 20, "k": 50, "delta": 15.0, "alpha": 1e-05,
    "max_inner_iters": 30, "seed": 0, "n_seeds": 1,
    "hidden_sizes": [300, 300], "activation": "relu", "dtype": "float32",
    "pretrain": True,
}

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--train-horizons", default="200,1200")
    ap.add_argument("--test-horizons", default="50,100,200,400,800,1200")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    checkpoints = []
    for horizon in (int(h) for h in args.train_horizons.split(",")):
        config = {**BASE, "horizon": horizon, "epochs": args.epochs}
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as tmp:
            json.dump(config, tmp)
            tmp_path = tmp.name
        run_dir = os.path.join(args.out, f"T{horizon}")
        argv = ["train", "--config", tmp_path, "--out", run_dir]
        if args.force:
            argv.append("--force")
        code = cli_main(argv)
        if code != 0:
            sys.exit(code)
        checkpoints.append(
            f"{horizon}={run_dir}/seed_0/checkpoint_final.json")

    argv = ["horizon-curves", "--env", "gridworld",
            "--horizons", args.test_horizons,
            "--out", os.path.join(args.out, "horizon_curves.csv")]
    for item in checkpoints:
        argv += ["--checkpoint", item]
    sys.exit(cli_main(argv))
