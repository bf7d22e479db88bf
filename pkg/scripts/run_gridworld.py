#!/usr/bin/env python3
"""Full GridWorld training experiment from the shipped preset.

Writes per-seed train logs, checkpoints, and the aggregate entropy-index
curve under --out. Expect several hours at the full 200 epochs; pass
--epochs to scale down.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from maxent_explore.cli import main as cli_main

PRESET = Path(__file__).resolve().parent.parent / "presets" / "gridworld.json"


def run(preset_path, out, epochs=None, seeds=None, force=False):
    with open(preset_path) as f:
        config = json.load(f)
    if epochs is not None:
        config["epochs"] = epochs
    if seeds is not None:
        config["n_seeds"] = seeds
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as tmp:
        json.dump(config, tmp)
        tmp_path = tmp.name
    argv = ["train", "--config", tmp_path, "--out", out]
    if force:
        argv.append("--force")
    return cli_main(argv)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--seeds", type=int, default=None)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    sys.exit(run(PRESET, args.out, args.epochs, args.seeds, args.force))
