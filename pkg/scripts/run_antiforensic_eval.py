#!/usr/bin/env python3
"""Run the anti-forensic comparison harness against a trained checkpoint and
print the per-method summary, including how often the full pipeline beats the
stage-1-only output on the histogram domain gap.

Usage: python scripts/run_antiforensic_eval.py --ckpt runs/desk/ckpt_final.pt
"""

import argparse
import json

from safepaint.data import Corpus
from safepaint.models import load_checkpoint
from safepaint.train import antiforensic_eval


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ckpt", required=True)
    parser.add_argument("--corpus-size", type=int, default=200)
    parser.add_argument("--image-size", type=int, default=64)
    parser.add_argument("--max-images", type=int, default=50)
    parser.add_argument("--jpeg-qf", type=int, default=None)
    parser.add_argument("--out-report", default=None)
    args = parser.parse_args()

    seed = load_checkpoint(args.ckpt)["seed"]
    corpus = Corpus.synthetic(seed, args.corpus_size, size=args.image_size)
    report = antiforensic_eval(
        args.ckpt, corpus, jpeg_qf=args.jpeg_qf, max_images=args.max_images
    )

    full = {r["name"]: r["kl_gap"] for r in report["per_image"] if r["method"] == "safepaint"}
    stage1 = {r["name"]: r["kl_gap"] for r in report["per_image"] if r["method"] == "stage1"}
    wins = sum(1 for name in full if full[name] < stage1[name])
    print(f"full pipeline beats stage-1 on domain gap: {wins}/{len(full)} images")
    print(json.dumps(report["summary"], indent=2))
    if args.out_report:
        with open(args.out_report, "w") as fh:
            json.dump(report, fh, indent=2)
        print(f"report written to {args.out_report}")


if __name__ == "__main__":
    main()
