#!/usr/bin/env python3
"""Full MountainCar training experiment from the shipped preset."""

import argparse
import sys
from pathlib import Path

from run_gridworld import run

PRESET = Path(__file__).resolve().parent.parent / "presets" / "mountaincar.json"

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--seeds", type=int, default=None)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    sys.exit(run(PRESET, args.out, args.epochs, args.seeds, args.force))
