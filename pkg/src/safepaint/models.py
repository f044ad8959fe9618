"""Two-stage inpainting networks and the domain pattern extractor.

Stage one completes content from the corrupted image; stage two refines the
completed hole conditioned on a spatially tiled background pattern vector,
with region-wise attention in its upsampling path. A patch discriminator
scores stage-two outputs. The extractor summarizes an arbitrary region of an
image as a 16-dim vector using partial convolutions, so pixels outside the
region provably cannot influence the vector.
"""

import dataclasses
import pickle
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .blocks import PartialConv2d, RegionWiseAttention, spectral_norm

CHECKPOINT_HEADER = b"safepaint-ckpt-v1\n"


@dataclass
class ModelConfig:
    base_width: int = 16
    residual_blocks: int = 4
    disc_width: int = 24
    extractor_width: int = 16
    domain_dim: int = 16
    image_channels: int = 3


def init_weights(module, std=0.02):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            spectral_norm(nn.Conv2d(channels, channels, 3, padding=1)),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(),
            spectral_norm(nn.Conv2d(channels, channels, 3, padding=1)),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x):
        return x + self.body(x)


class _UpStage(nn.Module):
    def __init__(self, in_ch, out_ch, rwsa):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            spectral_norm(nn.Conv2d(in_ch, out_ch, 3, padding=1)),
            nn.InstanceNorm2d(out_ch, affine=True),
            nn.ReLU(),
        )
        self.attention = RegionWiseAttention(out_ch, reduction=4) if rwsa else None

    def forward(self, x, mask):
        x = self.conv(x)
        if self.attention is not None:
            x = self.attention(x, mask)
        return x


class ResnetGenerator(nn.Module):
    """Johnson-style encoder / residual trunk / decoder, spectral-normalized,
    with optional region-wise attention after each upsampling stage.

    Output passes through tanh and is rescaled to [0, 1]; spatial size is
    preserved (two stride-2 downsamples, two matched upsamples).
    """

    def __init__(self, in_channels, base=16, residual_blocks=4, rwsa=False, out_channels=3):
        super().__init__()
        self.encode = nn.Sequential(
            spectral_norm(nn.Conv2d(in_channels, base, 7, padding=3)),
            nn.InstanceNorm2d(base, affine=True),
            nn.ReLU(),
            spectral_norm(nn.Conv2d(base, base * 2, 3, stride=2, padding=1)),
            nn.InstanceNorm2d(base * 2, affine=True),
            nn.ReLU(),
            spectral_norm(nn.Conv2d(base * 2, base * 4, 3, stride=2, padding=1)),
            nn.InstanceNorm2d(base * 4, affine=True),
            nn.ReLU(),
        )
        self.trunk = nn.Sequential(*[ResidualBlock(base * 4) for _ in range(residual_blocks)])
        self.up1 = _UpStage(base * 4, base * 2, rwsa)
        self.up2 = _UpStage(base * 2, base, rwsa)
        self.head = spectral_norm(nn.Conv2d(base, out_channels, 7, padding=3))

    def forward(self, x, mask=None):
        if mask is None:
            mask = torch.zeros(x.shape[0], 1, x.shape[2], x.shape[3], dtype=x.dtype, device=x.device)
        h = self.encode(x)
        h = self.trunk(h)
        h = self.up1(h, mask)
        h = self.up2(h, mask)
        return (torch.tanh(self.head(h)) + 1.0) / 2.0


class PatchDiscriminator(nn.Module):
    """Spectral-normalized PatchGAN emitting a logit per image patch; three
    stride-2 stages give an H/8 x W/8 score map with a 70 px receptive field."""

    def __init__(self, base=24, in_channels=3):
        super().__init__()
        self.net = nn.Sequential(
            spectral_norm(nn.Conv2d(in_channels, base, 4, stride=2, padding=1)),
            nn.LeakyReLU(0.2),
            spectral_norm(nn.Conv2d(base, base * 2, 4, stride=2, padding=1)),
            nn.LeakyReLU(0.2),
            spectral_norm(nn.Conv2d(base * 2, base * 4, 4, stride=2, padding=1)),
            nn.LeakyReLU(0.2),
            spectral_norm(nn.Conv2d(base * 4, base * 8, 3, stride=1, padding=1)),
            nn.LeakyReLU(0.2),
            spectral_norm(nn.Conv2d(base * 8, 1, 3, stride=1, padding=1)),
        )

    def forward(self, image):
        if image.shape[1] != self.net[0].module.in_channels:
            raise ValueError("discriminator expects a 3-channel image")
        return self.net(image)


class DomainPatternExtractor(nn.Module):
    """Region-restricted feature summarizer: partial convolutions gated by the
    region mask, masked global average pooling, then a linear head to a fixed
    16-dim pattern vector."""

    def __init__(self, out_dim=16, base=16, in_channels=3):
        super().__init__()
        self.conv1 = PartialConv2d(in_channels, base, 3, stride=2, padding=1)
        self.conv2 = PartialConv2d(base, base * 2, 3, stride=2, padding=1)
        self.conv3 = PartialConv2d(base * 2, base * 4, 3, stride=2, padding=1)
        self.head = nn.Linear(base * 4, out_dim)
        self.act = nn.ReLU()

    def forward(self, image, region):
        if not torch.any(region > 0.5):
            raise ValueError("region mask has no positive pixels")
        x, m = self.conv1(image, region)
        x = self.act(x)
        x, m = self.conv2(x, m)
        x = self.act(x)
        x, m = self.conv3(x, m)
        x = self.act(x)
        denom = m.sum(dim=(2, 3)).clamp(min=1.0)
        pooled = (x * m).sum(dim=(2, 3)) / denom
        return self.head(pooled)


def pattern_map(vector, height, width):
    """Tile a (B, D) pattern vector into a spatially constant (B, D, H, W) map."""
    return vector[:, :, None, None].expand(-1, -1, height, width)


def coarse_forward(g1, image_in, mask):
    """Stage-one pass: complete the hole, then paste it over the known pixels."""
    raw = g1(torch.cat([image_in, mask], dim=1))
    return image_in * (1.0 - mask) + raw * mask


def refine_forward(g2, coarse, mask, pattern):
    """Stage-two pass: refine the completed hole conditioned on the tiled
    pattern map; known pixels again pass through untouched."""
    if pattern.shape[-2:] != coarse.shape[-2:]:
        raise ValueError("pattern map resolution must match the image")
    raw = g2(torch.cat([coarse, mask, pattern], dim=1), mask)
    return coarse * (1.0 - mask) + raw * mask


def build_models(cfg: ModelConfig, seed=0):
    """Construct all four networks with seed-determined initialization."""
    torch.manual_seed(int(seed))
    c = cfg.image_channels
    g1 = ResnetGenerator(c + 1, base=cfg.base_width, residual_blocks=cfg.residual_blocks)
    g2 = ResnetGenerator(
        c + 1 + cfg.domain_dim,
        base=cfg.base_width,
        residual_blocks=cfg.residual_blocks,
        rwsa=True,
    )
    d = PatchDiscriminator(base=cfg.disc_width, in_channels=c)
    p = DomainPatternExtractor(out_dim=cfg.domain_dim, base=cfg.extractor_width, in_channels=c)
    # GAN-style small-normal init for the adversarially trained nets; the
    # extractor keeps the default init so pattern vectors start at a usable
    # scale (the collapse monitor needs batch variance above its floor)
    for net in (g1, g2, d):
        init_weights(net)
    return {"g1": g1, "g2": g2, "d": d, "p": p}


def run_pipeline(models, image, mask, stage="full"):
    """Inpaint a numpy image (H, W, 3 in [0,1]) with the trained pipeline.

    stage picks 'stage1' (coarse output only) or 'full'. The returned image
    is composited in float64 against the original, so known pixels are
    bit-identical to the input.
    """
    from .masks import composite, make_input

    if stage not in ("stage1", "full"):
        raise ValueError(f"unknown stage {stage!r}")
    image = np.asarray(image, dtype=np.float64)
    corrupted = make_input(image, mask)
    x = torch.from_numpy(corrupted.transpose(2, 0, 1)[None]).float()
    m = torch.from_numpy(np.asarray(mask, dtype=np.float64))[None, None].float()

    g1, g2, p = models["g1"], models["g2"], models["p"]
    was_training = [net.training for net in (g1, g2, p)]
    g1.eval(), g2.eval(), p.eval()
    try:
        with torch.no_grad():
            coarse = coarse_forward(g1, x, m)
            if stage == "stage1":
                out = coarse
            else:
                z_back = p(coarse, 1.0 - m)
                pattern = pattern_map(z_back, x.shape[2], x.shape[3])
                out = refine_forward(g2, coarse, m, pattern)
    finally:
        for net, flag in zip((g1, g2, p), was_training):
            net.train(flag)
    filled = out[0].numpy().transpose(1, 2, 0).astype(np.float64)
    return composite(image, mask, np.clip(filled, 0.0, 1.0))


def _tree_to_numpy(obj):
    if isinstance(obj, torch.Tensor):
        return ("__tensor__", obj.detach().cpu().numpy())
    if isinstance(obj, dict):
        return {k: _tree_to_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        seq = [_tree_to_numpy(v) for v in obj]
        return seq if isinstance(obj, list) else tuple(seq)
    return obj


def _tree_to_torch(obj):
    if isinstance(obj, tuple) and len(obj) == 2 and obj[0] == "__tensor__":
        return torch.from_numpy(np.array(obj[1]))
    if isinstance(obj, dict):
        return {k: _tree_to_torch(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_tree_to_torch(v) for v in obj]
    if isinstance(obj, tuple):
        return tuple(_tree_to_torch(v) for v in obj)
    return obj


def save_checkpoint(path, models, config=None, seed=0, step=0, optimizers=None, extra=None):
    """Single-archive checkpoint: versioned header then a pickled blob of
    numpy parameter trees plus config/seed/step (and optimizer state when
    training needs to resume)."""
    blob = {
        "config": dataclasses.asdict(config) if dataclasses.is_dataclass(config) else config,
        "seed": int(seed),
        "step": int(step),
        "models": {name: _tree_to_numpy(net.state_dict()) for name, net in models.items()},
        "optimizers": {
            name: _tree_to_numpy(opt.state_dict()) for name, opt in (optimizers or {}).items()
        },
        "extra": extra,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_HEADER)
        pickle.dump(blob, fh, protocol=4)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = fh.read(len(CHECKPOINT_HEADER))
        if header != CHECKPOINT_HEADER:
            raise ValueError(f"{path} is not a safepaint checkpoint (bad header)")
        return pickle.load(fh)


def restore_models(models, blob):
    for name, net in models.items():
        net.load_state_dict(_tree_to_torch(blob["models"][name]))
    return models


def restore_optimizers(optimizers, blob):
    for name, opt in optimizers.items():
        opt.load_state_dict(_tree_to_torch(blob["optimizers"][name]))
    return optimizers
