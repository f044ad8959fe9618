#!/usr/bin/env python3
"""Write a synthetic texture corpus to a directory of PNGs.

Usage: python scripts/make_corpus.py --seed 0 --count 200 --size 64 --out corpus/
"""

import argparse

from safepaint.data import Corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()
    corpus = Corpus.synthetic(args.seed, args.count, size=args.size)
    corpus.write_dir(args.out)
    print(f"wrote {len(corpus)} images to {args.out}")


if __name__ == "__main__":
    main()
