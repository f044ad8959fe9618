"""End-to-end training loop, metrics, JPEG post-processing, and the
anti-forensic comparison harness.

Everything downstream of (seed, corpus, config) is deterministic: batches and
masks are derived per step from hashed labels rather than sequential RNG
state, so a resumed run replays the identical stream and two identical runs
produce byte-identical logs and checkpoints.
"""

import dataclasses
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import classical, data, losses, masks, models, probes

SEED_ENV_VAR = "SAFEPAINT_SEED"


class CollapseError(RuntimeError):
    """Domain pattern extractor emitted (near-)identical vectors batch-wide."""


class NonFiniteLossError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2e-4
    adam_betas: tuple = (0.5, 0.999)
    batch: int = 4
    steps: int = 2000
    seed: int = 0
    image_size: int = 64
    base_width: int = 16
    disc_width: int = 24
    extractor_width: int = 16
    residual_blocks: int = 4
    domain_dim: int = 16
    eval_fraction: float = 0.25
    checkpoint_every: int = 1000
    collapse_floor: float = 1e-6
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")

    def model_config(self):
        return models.ModelConfig(
            base_width=self.base_width,
            residual_blocks=self.residual_blocks,
            disc_width=self.disc_width,
            extractor_width=self.extractor_width,
            domain_dim=self.domain_dim,
        )


def load_config(path, env=None):
    """Parse a key=value config file mirroring TrainConfig field names.

    Loss weights use dotted keys (weights.l1=1.0); adam_betas is a comma
    pair. The SAFEPAINT_SEED environment variable overrides seed.
    """
    env = os.environ if env is None else env
    values = {}
    weight_values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("weights."):
            weight_values[key[len("weights.") :]] = float(value)
        elif key == "adam_betas":
            parts = value.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: adam_betas needs two comma values")
            values[key] = (float(parts[0]), float(parts[1]))
        elif key in ("lr", "eval_fraction", "collapse_floor"):
            values[key] = float(value)
        elif key in (
            "batch",
            "steps",
            "seed",
            "image_size",
            "base_width",
            "disc_width",
            "extractor_width",
            "residual_blocks",
            "domain_dim",
            "checkpoint_every",
        ):
            values[key] = int(value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    if weight_values:
        values["weights"] = losses.LossWeights(**weight_values)
    if SEED_ENV_VAR in env:
        values["seed"] = int(env[SEED_ENV_VAR])
    return TrainConfig(**values)


def save_config(path, cfg: TrainConfig):
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "weights":
            for wf in dataclasses.fields(value):
                lines.append(f"weights.{wf.name}={getattr(value, wf.name)}")
        elif f.name == "adam_betas":
            lines.append(f"adam_betas={value[0]},{value[1]}")
        else:
            lines.append(f"{f.name}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


class TrainState:
    """Models, optimizers, frozen pyramid, and the step counter."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.nets = models.build_models(cfg.model_config(), seed=cfg.seed)
        self.pyramid = losses.FeaturePyramid(seed=0)
        gen_params = (
            list(self.nets["g1"].parameters())
            + list(self.nets["g2"].parameters())
            + list(self.nets["p"].parameters())
        )
        self.opt_g = torch.optim.Adam(gen_params, lr=cfg.lr, betas=cfg.adam_betas)
        self.opt_d = torch.optim.Adam(
            self.nets["d"].parameters(), lr=cfg.lr, betas=cfg.adam_betas
        )
        self.step = 0

    def save(self, path):
        models.save_checkpoint(
            path,
            self.nets,
            config=self.cfg,
            seed=self.cfg.seed,
            step=self.step,
            optimizers={"g": self.opt_g, "d": self.opt_d},
        )

    @classmethod
    def load(cls, path, cfg=None):
        blob = models.load_checkpoint(path)
        if cfg is None:
            saved = dict(blob["config"])
            saved["weights"] = losses.LossWeights(**saved["weights"])
            saved["adam_betas"] = tuple(saved["adam_betas"])
            cfg = TrainConfig(**saved)
        state = cls(cfg)
        models.restore_models(state.nets, blob)
        if blob["optimizers"]:
            models.restore_optimizers({"g": state.opt_g, "d": state.opt_d}, blob)
        state.step = blob["step"]
        return state


def batch_for_step(corpus, train_indices, cfg: TrainConfig, step):
    """Deterministic (images, masks) tensors for one step, derived from
    (seed, step) alone."""
    rng = np.random.default_rng(data.derived_seed(cfg.seed, "batch", step))
    picks = rng.choice(train_indices, size=cfg.batch, replace=len(train_indices) < cfg.batch)
    imgs, ms = [], []
    for slot, idx in enumerate(picks):
        img = corpus.images[int(idx)]
        bucket = data.TRAIN_BUCKETS[int(rng.integers(0, len(data.TRAIN_BUCKETS)))]
        mask = masks.generate_irregular(
            data.derived_seed(cfg.seed, "mask", step, slot),
            bucket,
            cfg.image_size,
            cfg.image_size,
        )
        imgs.append(torch.from_numpy(img.transpose(2, 0, 1)).float())
        ms.append(torch.from_numpy(mask)[None].float())
    return torch.stack(imgs), torch.stack(ms)


def _require_finite(report):
    for key, value in report.items():
        if not np.isfinite(value):
            raise NonFiniteLossError(f"loss component {key!r} is not finite: {value}")


def train_step(state: TrainState, images, hole_masks):
    """One alternating update: discriminator on (real vs detached fake),
    then a joint generator/extractor step on the weighted total."""
    cfg = state.cfg
    nets, pyramid = state.nets, state.pyramid
    g1, g2, d, p = nets["g1"], nets["g2"], nets["d"], nets["p"]
    for net in (g1, g2, d, p):
        net.train()

    image_in = images * (1.0 - hole_masks) + hole_masks
    coarse = models.coarse_forward(g1, image_in, hole_masks)
    z_back = p(coarse, 1.0 - hole_masks)
    pattern = models.pattern_map(z_back, images.shape[2], images.shape[3])
    refined = models.refine_forward(g2, coarse, hole_masks, pattern)

    d_real = d(images)
    d_fake_detached = d(refined.detach())
    d_loss, _ = losses.adversarial_losses(d_real, d_fake_detached)
    state.opt_d.zero_grad()
    d_loss.backward()
    state.opt_d.step()

    z_out = p(refined, hole_masks)
    z_target = p(images, hole_masks)
    feats = [pyramid.features(t) for t in (coarse, refined, images)]
    components = {
        "l1": losses.l1_loss(coarse, refined, images),
        "per": losses.perceptual_from_features(*feats),
        "sty": losses.style_from_features(*feats),
        "adv": losses.generator_adversarial_loss(d(refined)),
        "dom": losses.domain_distance_loss(z_out, z_back, z_target),
    }
    total = losses.total_loss(components, cfg.weights)
    state.opt_g.zero_grad()
    total.backward()
    state.opt_g.step()

    zb_var = float(z_back.detach().var(dim=0, unbiased=False).mean()) if images.shape[0] > 1 else float("inf")
    report = {
        "l1": float(components["l1"].detach()),
        "per": float(components["per"].detach()),
        "sty": float(components["sty"].detach()),
        "adv_d": float(d_loss.detach()),
        "adv_g": float(components["adv"].detach()),
        "dom": float(components["dom"].detach()),
        "total": float(total.detach()),
    }
    _require_finite(report)
    if images.shape[0] > 1 and zb_var < cfg.collapse_floor:
        raise CollapseError(
            f"background pattern variance {zb_var:.3g} under {cfg.collapse_floor:.0e}; "
            "extractor collapsed to a constant"
        )
    state.step += 1
    return report


def train_run(corpus, cfg: TrainConfig, out_dir, resume=None):
    """Train to cfg.steps, logging every step and checkpointing periodically.

    Returns (final checkpoint path, list of log rows). With resume pointing
    at a checkpoint of the same config, continues from its step counter and
    reproduces the remaining log of an uninterrupted run.
    """
    if len(corpus) < cfg.batch:
        raise ValueError("corpus smaller than one batch")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.jsonl"

    if resume is not None:
        state = TrainState.load(resume, cfg)
    else:
        state = TrainState(cfg)
        log_path.write_text("")

    train_indices, _ = corpus.split(cfg.seed, cfg.eval_fraction)
    rows = []
    with open(log_path, "a") as log:
        for step in range(state.step + 1, cfg.steps + 1):
            images, hole_masks = batch_for_step(corpus, train_indices, cfg, step)
            report = train_step(state, images, hole_masks)
            row = {"step": step, **report}
            rows.append(row)
            log.write(json.dumps(row) + "\n")
            if step % cfg.checkpoint_every == 0 and step != cfg.steps:
                state.save(out_dir / f"ckpt_step{step:06d}.pt")
    final_path = out_dir / "ckpt_final.pt"
    state.save(final_path)
    return final_path, rows


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for [0,1] images; equality caps at 100."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 1e-10:
        return 100.0
    return float(10.0 * np.log10(1.0 / mse))


def jpeg_roundtrip(image, qf):
    """Baseline JPEG encode/decode at the given quality factor."""
    from PIL import Image

    if not 1 <= int(qf) <= 100:
        raise ValueError("JPEG quality factor must be in [1, 100]")
    image = np.asarray(image, dtype=np.float64)
    gray = image.ndim == 2
    u8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    pil = Image.fromarray(u8, mode="L" if gray else "RGB")
    buf = io.BytesIO()
    pil.save(buf, format="JPEG", quality=int(qf))
    buf.seek(0)
    back = Image.open(buf)
    back = back.convert("L" if gray else "RGB")
    return np.asarray(back, dtype=np.float64) / 255.0


def proxy_feature_distance(a, b, pyramid):
    """Perceptual-style proxy for LPIPS over the frozen pyramid."""
    ta = torch.from_numpy(np.asarray(a).transpose(2, 0, 1)[None]).float()
    tb = torch.from_numpy(np.asarray(b).transpose(2, 0, 1)[None]).float()
    with torch.no_grad():
        fa = pyramid.features(ta)
        fb = pyramid.features(tb)
        return float(sum((x - y).abs().mean() for x, y in zip(fa, fb)))


METHODS = ("safepaint", "stage1", "diffusion", "exemplar")
PROBES = ("variance", "similarity", "learned")

REPORT_SCHEMA = {
    "type": "object",
    "required": ["methods", "buckets", "jpeg_qf", "per_image", "summary"],
    "properties": {
        "methods": {"type": "array", "items": {"type": "string"}},
        "buckets": {"type": "array", "items": {"type": "string"}},
        "jpeg_qf": {"type": ["integer", "null"]},
        "per_image": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "bucket", "method", "kl_gap", "psnr", "proxy_lpips", "probes"],
                "properties": {
                    "name": {"type": "string"},
                    "bucket": {"type": "string"},
                    "method": {"type": "string"},
                    "kl_gap": {"type": "number"},
                    "psnr": {"type": "number"},
                    "proxy_lpips": {"type": "number"},
                    "probes": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["auc", "f1", "flagged"],
                            "properties": {
                                "auc": {"type": "number", "minimum": 0, "maximum": 1},
                                "f1": {"type": "number", "minimum": 0, "maximum": 1},
                                "flagged": {"type": "boolean"},
                            },
                        },
                    },
                },
            },
        },
        "summary": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["kl_gap_mean", "psnr_mean", "proxy_lpips_mean", "probes"],
                "properties": {
                    "kl_gap_mean": {"type": "number"},
                    "psnr_mean": {"type": "number"},
                    "proxy_lpips_mean": {"type": "number"},
                    "probes": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["auc_mean", "f1_mean", "acc"],
                        },
                    },
                },
            },
        },
    },
}


def _method_output(method, nets, image, mask, diffusion_cfg):
    if method in ("safepaint", "stage1"):
        stage = "full" if method == "safepaint" else "stage1"
        return models.run_pipeline(nets, image, mask, stage=stage)
    corrupted = masks.make_input(image, mask)
    if method == "diffusion":
        out = classical.diffuse_inpaint(corrupted, mask, diffusion_cfg)
    elif method == "exemplar":
        out = classical.exemplar_inpaint(corrupted, mask)
    else:
        raise ValueError(f"unknown method {method!r}")
    return masks.composite(image, mask, out)


def _config_from_blob(blob):
    saved = dict(blob["config"])
    saved["weights"] = losses.LossWeights(**saved["weights"])
    saved["adam_betas"] = tuple(saved["adam_betas"])
    return TrainConfig(**saved)


def train_eval_detector(checkpoint, corpus, steps=150):
    """The learned probe used by the harness: a splice-tamper detector fit on
    the train split only, deterministic given the checkpoint's seed."""
    cfg = _config_from_blob(models.load_checkpoint(checkpoint))
    train_indices, _ = corpus.split(cfg.seed, cfg.eval_fraction)
    pairs = data.splice_pairs(corpus, train_indices[: min(32, len(train_indices))], cfg.seed)
    return probes.train_patch_detector(pairs, seed=cfg.seed, steps=steps)


def antiforensic_eval(
    checkpoint,
    corpus,
    buckets=data.EVAL_BUCKETS,
    jpeg_qf=None,
    detector=None,
    detector_steps=150,
    max_images=None,
    diffusion_cfg=None,
    eval_methods=METHODS,
):
    """Score every inpainting method with every probe on the held-out split.

    Per held-out image: inpaint with the full pipeline, stage one only, and
    the classical baselines; compute the histogram domain gap, PSNR, the
    proxy feature distance, and detection metrics from the smoothness,
    duplicate-similarity, and learned probes. Detector training only ever
    reads the train split.
    """
    blob = models.load_checkpoint(checkpoint)
    cfg = _config_from_blob(blob)
    nets = models.build_models(cfg.model_config(), seed=cfg.seed)
    models.restore_models(nets, blob)
    pyramid = losses.FeaturePyramid(seed=0)
    diffusion_cfg = diffusion_cfg or classical.DiffusionConfig(max_iters=1200)

    _, eval_indices = corpus.split(cfg.seed, cfg.eval_fraction)
    if max_images is not None:
        eval_indices = eval_indices[:max_images]
    if not eval_indices:
        raise ValueError("no held-out images to evaluate")

    if detector is None:
        detector = train_eval_detector(checkpoint, corpus, steps=detector_steps)

    per_image = []
    for k, idx in enumerate(eval_indices):
        name, image = corpus.names[idx], corpus.images[idx]
        bucket = buckets[k % len(buckets)]
        mask = masks.generate_irregular(
            data.derived_seed(cfg.seed, "eval-mask", k),
            bucket,
            image.shape[0],
            image.shape[1],
        )
        for method in eval_methods:
            out = _method_output(method, nets, image, mask, diffusion_cfg)
            scored = jpeg_roundtrip(out, jpeg_qf) if jpeg_qf else out
            heatmaps = {
                "variance": 1.0 - probes.local_variance_map(scored),
                "similarity": probes.patch_similarity_map(scored),
                "learned": detector.heatmap(scored),
            }
            per_image.append(
                {
                    "name": name,
                    "bucket": str(bucket),
                    "method": method,
                    "kl_gap": probes.kl_domain_gap(scored, mask),
                    "psnr": psnr(out, image),
                    "proxy_lpips": proxy_feature_distance(out, image, pyramid),
                    "probes": {
                        probe: probes.detection_metrics(h, mask).as_dict()
                        for probe, h in heatmaps.items()
                    },
                }
            )

    summary = {}
    for method in eval_methods:
        rows = [r for r in per_image if r["method"] == method]
        summary[method] = {
            "kl_gap_mean": float(np.mean([r["kl_gap"] for r in rows])),
            "psnr_mean": float(np.mean([r["psnr"] for r in rows])),
            "proxy_lpips_mean": float(np.mean([r["proxy_lpips"] for r in rows])),
            "probes": {
                probe: {
                    "auc_mean": float(np.mean([r["probes"][probe]["auc"] for r in rows])),
                    "f1_mean": float(np.mean([r["probes"][probe]["f1"] for r in rows])),
                    "acc": float(np.mean([r["probes"][probe]["flagged"] for r in rows])),
                }
                for probe in PROBES
            },
        }
    return {
        "methods": list(eval_methods),
        "buckets": [str(b) for b in buckets],
        "jpeg_qf": jpeg_qf,
        "per_image": per_image,
        "summary": summary,
    }
