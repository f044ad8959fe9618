"""Training objectives: reconstruction, perceptual and style terms over a
frozen feature pyramid, the patch-adversarial pair, the domain distance pull,
and their weighted total.

The pyramid is a fixed, seeded convolutional stack standing in for a
pretrained backbone; an external weight file can replace its filters without
changing any loss algebra.
"""

import pickle
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class LossWeights:
    l1: float = 1.0
    per: float = 0.1
    sty: float = 250.0
    adv: float = 0.1
    dom: float = 0.01

    def __post_init__(self):
        for name in ("l1", "per", "sty", "adv", "dom"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


class FeaturePyramid(nn.Module):
    """Frozen three-scale conv feature extractor with seed-fixed filters."""

    def __init__(self, seed=0, widths=(8, 16, 32), in_channels=3):
        super().__init__()
        gen = torch.Generator().manual_seed(int(seed))
        stages = []
        prev = in_channels
        for width in widths:
            conv = nn.Conv2d(prev, width, 3, padding=1)
            with torch.no_grad():
                std = (2.0 / (prev * 9)) ** 0.5
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                conv.bias.zero_()
            stages.append(conv)
            prev = width
        self.stages = nn.ModuleList(stages)
        for param in self.parameters():
            param.requires_grad_(False)
        self.eval()

    def train(self, mode=True):
        return super().train(False)  # permanently frozen

    def features(self, x):
        maps = []
        h = x
        for i, conv in enumerate(self.stages):
            if i > 0:
                h = F.avg_pool2d(h, 2)
            h = F.relu(conv(h))
            maps.append(h)
        return maps

    def forward(self, x):
        return self.features(x)

    def save_weights(self, path):
        blob = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        with open(path, "wb") as fh:
            pickle.dump(blob, fh, protocol=4)

    @classmethod
    def from_file(cls, path, in_channels=3):
        with open(path, "rb") as fh:
            blob = pickle.load(fh)
        widths = tuple(
            blob[f"stages.{i}.weight"].shape[0] for i in range(len(blob) // 2)
        )
        pyramid = cls(widths=widths, in_channels=in_channels)
        pyramid.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in blob.items()})
        return pyramid


def l1_loss(coarse, refined, target):
    """Mean absolute error of both stages against the ground truth."""
    if coarse.shape != target.shape or refined.shape != target.shape:
        raise ValueError("image shape mismatch")
    return (coarse - target).abs().mean() + (refined - target).abs().mean()


def perceptual_from_features(f_coarse, f_refined, f_target):
    loss = f_coarse[0].new_zeros(())
    for fc, fr, ft in zip(f_coarse, f_refined, f_target):
        loss = loss + (fc - ft).abs().mean() + (fr - ft).abs().mean()
    return loss


def perceptual_loss(coarse, refined, target, pyramid):
    """Mean absolute feature differences across all pyramid scales."""
    return perceptual_from_features(
        pyramid.features(coarse), pyramid.features(refined), pyramid.features(target)
    )


def gram_matrix(feat):
    """Channel covariance normalized by C*H*W: (B, C, C)."""
    b, c, h, w = feat.shape
    flat = feat.reshape(b, c, h * w)
    return flat @ flat.transpose(1, 2) / float(c * h * w)


def style_from_features(f_coarse, f_refined, f_target):
    loss = f_coarse[0].new_zeros(())
    for fc, fr, ft in zip(f_coarse, f_refined, f_target):
        g_t = gram_matrix(ft)
        loss = loss + (gram_matrix(fc) - g_t).abs().mean() + (gram_matrix(fr) - g_t).abs().mean()
    return loss


def style_loss(coarse, refined, target, pyramid):
    """Perceptual loss over normalized Gram matrices per scale."""
    return style_from_features(
        pyramid.features(coarse), pyramid.features(refined), pyramid.features(target)
    )


def adversarial_losses(real_logits, fake_logits):
    """Patch-wise GAN pair: (discriminator loss, generator loss).

    The discriminator term is the sum of BCE pushes toward real=1, fake=0;
    the generator term is the non-saturating -E[log D(fake)]. Callers manage
    which fake pass is detached.
    """
    ones_r = torch.ones_like(real_logits)
    zeros_f = torch.zeros_like(fake_logits)
    d_loss = F.binary_cross_entropy_with_logits(real_logits, ones_r) + (
        F.binary_cross_entropy_with_logits(fake_logits, zeros_f)
    )
    g_loss = generator_adversarial_loss(fake_logits)
    return d_loss, g_loss


def generator_adversarial_loss(fake_logits):
    return F.binary_cross_entropy_with_logits(fake_logits, torch.ones_like(fake_logits))


def domain_distance_loss(z_out, z_back, z_target):
    """Euclidean pull of the output pattern toward background and target
    patterns, averaged over the batch."""
    if z_out.shape != z_back.shape or z_out.shape != z_target.shape:
        raise ValueError("pattern vector shape mismatch")
    return (
        (z_out - z_back).norm(dim=-1) + (z_out - z_target).norm(dim=-1)
    ).mean()


TOTAL_COMPONENTS = ("l1", "per", "sty", "adv", "dom")


def total_loss(components, weights: LossWeights):
    """Weighted sum of the named loss components (generator-side adv)."""
    missing = [k for k in TOTAL_COMPONENTS if k not in components]
    if missing:
        raise ValueError(f"missing loss components: {missing}")
    return (
        weights.l1 * components["l1"]
        + weights.per * components["per"]
        + weights.sty * components["sty"]
        + weights.adv * components["adv"]
        + weights.dom * components["dom"]
    )
