#!/usr/bin/env python3
"""Train on the miniature world and summarize the learning curve.

Single-threaded BLAS is fastest at these matrix sizes; consider running as

    OPENBLAS_NUM_THREADS=1 python scripts/train_mini.py --seed 1 --out runs/mini1
"""

import argparse
from pathlib import Path

import numpy as np

from hgam.training import TrainConfig, train
from hgam.world import WorldConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--episodes", type=int, default=400)
    ap.add_argument("--out", default="runs/mini")
    ap.add_argument("--no-gat", action="store_true")
    args = ap.parse_args()

    world = WorldConfig(area_width=8.0, area_height=8.0, num_muavs=1,
                        num_cuavs=1, num_pois=20, max_steps=200)
    tc = TrainConfig(max_episodes=args.episodes, use_gat=not args.no_gat)
    rows = train(world, tc, args.seed, Path(args.out))

    r = np.array([row["reward_muav_mean"] for row in rows])
    c = np.array([row["C"] for row in rows])
    warm = tc.e_min
    window = min(50, max(1, (len(rows) - warm) // 2))
    first = r[warm: warm + window].mean()
    last = r[-window:].mean()
    print(f"episodes: {len(rows)}")
    print(f"collector reward, first {window} trained episodes: {first:.2f}")
    print(f"collector reward, last {window} episodes:          {last:.2f}")
    print(f"collection ratio over the last {window} episodes:  {c[-window:].mean():.3f}")
    print(f"report and checkpoints under {args.out}/")


if __name__ == "__main__":
    main()
