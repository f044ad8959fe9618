#!/usr/bin/env python3
"""Desk-scale training run on the synthetic corpus, printing the loss trends
the evaluation cares about (reconstruction and domain-distance moving
averages).

Usage: python scripts/train_synthetic.py --out runs/desk --steps 2000
"""

import argparse

import numpy as np

from safepaint.data import Corpus
from safepaint.train import TrainConfig, train_run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--corpus-size", type=int, default=200)
    parser.add_argument("--image-size", type=int, default=64)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    cfg = TrainConfig(seed=args.seed, steps=args.steps, image_size=args.image_size)
    corpus = Corpus.synthetic(cfg.seed, args.corpus_size, size=args.image_size)
    ckpt, rows = train_run(corpus, cfg, args.out)

    window = min(100, len(rows) // 2)
    for key in ("l1", "dom"):
        series = [r[key] for r in rows]
        first = float(np.mean(series[:window]))
        last = float(np.mean(series[-window:]))
        print(f"{key}: first-{window} avg {first:.4f} -> last-{window} avg {last:.4f} "
              f"(ratio {last / first:.3f})")
    print(f"checkpoint: {ckpt}")


if __name__ == "__main__":
    main()
