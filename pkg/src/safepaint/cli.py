"""Command-line entry point.

Subcommands: make-masks, train, inpaint, detect, evaluate. All image I/O is
PNG; reports are JSON written to explicit --out paths. Exit codes: 0 success,
2 usage error, 1 runtime error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import classical, data, imgio, masks, probes, train
from . import models as models_mod


def _bucket(text):
    try:
        return masks.MaskBucket.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bucket_list(text):
    return [_bucket(part) for part in text.split(",")]


def _size(text):
    try:
        if "x" in text:
            h, w = (int(p) for p in text.split("x", 1))
        else:
            h = w = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must be N or HxW, got {text!r}") from None
    return h, w


def build_parser():
    parser = argparse.ArgumentParser(
        prog="safepaint",
        description="Anti-forensic two-stage inpainting, classical baselines, and forensic probes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-masks", help="generate a brush-stroke hole mask PNG")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bucket", type=_bucket, required=True, help="hole ratio bucket, e.g. 30-40")
    p.add_argument("--size", type=_size, required=True, help="mask size: N or HxW")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the two-stage pipeline")
    p.add_argument("--config", required=True, help="key=value config file")
    p.add_argument("--data", required=True, help="directory of training PNGs")
    p.add_argument("--out", required=True, help="output directory for log and checkpoints")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("inpaint", help="inpaint one image with a chosen method")
    p.add_argument("--ckpt", default=None, help="checkpoint (needed for safepaint/stage1)")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--method", choices=["safepaint", "stage1", "diffusion", "exemplar"], required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("detect", help="run one forensic probe against an image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="candidate tampered region (ground truth for metrics)")
    p.add_argument("--probe", choices=["kl", "variance", "similarity", "learned"], required=True)
    p.add_argument("--detector-ckpt", default=None, help="trained detector (required for --probe learned)")
    p.add_argument("--out-heatmap", default=None, help="heatmap PNG (ignored for --probe kl)")
    p.add_argument("--out-report", required=True)

    p = sub.add_parser("evaluate", help="run the anti-forensic comparison harness")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="directory of evaluation PNGs")
    p.add_argument("--buckets", type=_bucket_list, default=list(data.EVAL_BUCKETS))
    p.add_argument("--jpeg-qf", type=int, default=None)
    p.add_argument("--max-images", type=int, default=None)
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-detector", default=None, help="also save the trained probe detector")
    return parser


def _load_nets(ckpt_path):
    from . import losses

    blob = models_mod.load_checkpoint(ckpt_path)
    saved = dict(blob["config"])
    saved["weights"] = losses.LossWeights(**saved["weights"])
    saved["adam_betas"] = tuple(saved["adam_betas"])
    cfg = train.TrainConfig(**saved)
    nets = models_mod.build_models(cfg.model_config(), seed=cfg.seed)
    return models_mod.restore_models(nets, blob)


def cmd_make_masks(args):
    h, w = args.size
    mask = masks.generate_irregular(args.seed, args.bucket, h, w)
    masks.save_mask(args.out, mask)
    return 0


def cmd_train(args):
    cfg = train.load_config(args.config)
    corpus = data.Corpus.from_dir(args.data, size=cfg.image_size)
    ckpt, _ = train.train_run(corpus, cfg, args.out, resume=args.resume)
    print(ckpt)
    return 0


def cmd_inpaint(args):
    image = imgio.load_image(args.image)
    mask = masks.load_mask(args.mask)
    if args.method in ("safepaint", "stage1"):
        if args.ckpt is None:
            raise ValueError(f"--ckpt is required for method {args.method}")
        nets = _load_nets(args.ckpt)
        out = models_mod.run_pipeline(
            nets, image, mask, stage="full" if args.method == "safepaint" else "stage1"
        )
    else:
        corrupted = masks.make_input(image, mask)
        if args.method == "diffusion":
            filled = classical.diffuse_inpaint(corrupted, mask)
        else:
            filled = classical.exemplar_inpaint(corrupted, mask)
        out = masks.composite(image, mask, filled)
    imgio.save_image(args.out, out)
    return 0


def cmd_detect(args):
    image = imgio.load_image(args.image)
    mask = masks.load_mask(args.mask)
    report = {"probe": args.probe}
    if args.probe == "kl":
        report["kl_gap"] = probes.kl_domain_gap(image, mask)
    else:
        if args.probe == "variance":
            heat = 1.0 - probes.local_variance_map(image)
        elif args.probe == "similarity":
            heat = probes.patch_similarity_map(image)
        else:
            if args.detector_ckpt is None:
                raise ValueError("--detector-ckpt is required for --probe learned")
            detector = _load_detector(args.detector_ckpt)
            heat = detector.heatmap(image)
        report.update(probes.detection_metrics(heat, mask).as_dict())
        if args.out_heatmap:
            imgio.save_heatmap(args.out_heatmap, heat)
    Path(args.out_report).write_text(json.dumps(report, indent=2) + "\n")
    return 0


def _save_detector(path, detector):
    models_mod.save_checkpoint(
        path, {"detector": detector.net}, seed=detector.seed, extra={"kind": "detector"}
    )


def _load_detector(path):
    blob = models_mod.load_checkpoint(path)
    detector = probes.PatchDetector(seed=blob["seed"])
    detector.net.load_state_dict(models_mod._tree_to_torch(blob["models"]["detector"]))
    detector.net.eval()
    return detector


def cmd_evaluate(args):
    corpus = data.Corpus.from_dir(args.data)
    detector = train.train_eval_detector(args.ckpt, corpus)
    report = train.antiforensic_eval(
        args.ckpt,
        corpus,
        buckets=tuple(args.buckets),
        jpeg_qf=args.jpeg_qf,
        detector=detector,
        max_images=args.max_images,
    )
    Path(args.out_report).write_text(json.dumps(report, indent=2) + "\n")
    if args.out_detector:
        _save_detector(args.out_detector, detector)
    return 0


_HANDLERS = {
    "make-masks": cmd_make_masks,
    "train": cmd_train,
    "inpaint": cmd_inpaint,
    "detect": cmd_detect,
    "evaluate": cmd_evaluate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
