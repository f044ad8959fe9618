"""Differentiable building blocks for the two-stage inpainting networks:
partial convolution, spectral weight normalization, channel attention with a
max-pooled descriptor, the learnable refinement block, and the region-wise
separated attention module that treats hole and background features through
independent gates before fusing.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


class PartialConv2d(nn.Module):
    """Convolution renormalized over valid pixels, with mask update.

    Windows containing at least one valid pixel are rescaled by
    window_area / valid_count and given the bias; fully invalid windows emit
    exactly zero. The updated mask marks windows that saw any valid pixel.
    The validity mask is single-channel and shared across feature channels.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True):
        super().__init__()
        self.conv = nn.Conv2d(
            in_channels, out_channels, kernel_size, stride=stride, padding=padding, bias=bias
        )
        self.register_buffer(
            "window_ones", torch.ones(1, 1, self.conv.kernel_size[0], self.conv.kernel_size[1])
        )
        self.window_area = float(self.conv.kernel_size[0] * self.conv.kernel_size[1])

    def forward(self, x, valid):
        if valid.dim() != 4 or valid.shape[1] != 1:
            raise ValueError("validity mask must have shape (B, 1, H, W)")
        with torch.no_grad():
            valid_count = F.conv2d(
                valid.to(x.dtype),
                self.window_ones.to(x.dtype),
                stride=self.conv.stride,
                padding=self.conv.padding,
            )
            mask_out = (valid_count > 0).to(x.dtype)
            scale = self.window_area / valid_count.clamp(min=1.0)

        raw = F.conv2d(
            x * valid.to(x.dtype),
            self.conv.weight,
            bias=None,
            stride=self.conv.stride,
            padding=self.conv.padding,
        )
        out = raw * scale * mask_out
        if self.conv.bias is not None:
            out = out + self.conv.bias.view(1, -1, 1, 1) * mask_out
        return out, mask_out


class SpectralNorm(nn.Module):
    """Divide a wrapped layer's weight by its largest singular value.

    One power-iteration step per training-mode forward keeps persistent
    left/right vectors; eval-mode forwards reuse them unchanged. Sigma is
    clamped from below so an all-zero weight passes through unchanged.
    """

    def __init__(self, module, name="weight", eps=1e-12):
        super().__init__()
        self.module = module
        self.name = name
        self.eps = eps
        weight = getattr(module, name)
        if not isinstance(weight, nn.Parameter):
            raise ValueError(f"{name} is not a parameter of {module}")
        del module._parameters[name]
        self.weight_orig = nn.Parameter(weight.detach().clone())
        mat = self.weight_orig.detach().reshape(self.weight_orig.shape[0], -1)
        self.register_buffer(
            "vec_u", F.normalize(torch.randn(mat.shape[0], dtype=mat.dtype), dim=0, eps=eps)
        )
        self.register_buffer(
            "vec_v", F.normalize(torch.randn(mat.shape[1], dtype=mat.dtype), dim=0, eps=eps)
        )
        setattr(module, name, self.weight_orig.detach())

    def normalized_weight(self, update=False):
        w = self.weight_orig
        mat = w.reshape(w.shape[0], -1)
        if update:
            with torch.no_grad():
                self.vec_v.copy_(F.normalize(mat.t() @ self.vec_u, dim=0, eps=self.eps))
                self.vec_u.copy_(F.normalize(mat @ self.vec_v, dim=0, eps=self.eps))
        # clone so each autograd graph snapshots the vectors; later in-place
        # power iterations must not invalidate earlier graphs
        u, v = self.vec_u.clone(), self.vec_v.clone()
        sigma = torch.dot(u, mat @ v).clamp(min=self.eps)
        return w / sigma

    def forward(self, *args, **kwargs):
        setattr(self.module, self.name, self.normalized_weight(update=self.training))
        return self.module(*args, **kwargs)


def spectral_norm(module, name="weight"):
    return SpectralNorm(module, name=name)


class ChannelAttention(nn.Module):
    """Squeeze-excite gate fed by the sum of average- and max-pooled
    descriptors, so strong isolated activations register alongside means."""

    def __init__(self, channels, reduction=16, min_hidden=4):
        super().__init__()
        hidden = max(channels // reduction, min_hidden)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def gate(self, x):
        descriptor = x.mean(dim=(2, 3)) + x.amax(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(descriptor))))

    def forward(self, x):
        if x.shape[1] != self.fc1.in_features:
            raise ValueError(
                f"expected {self.fc1.in_features} channels, got {x.shape[1]}"
            )
        return x * self.gate(x)[:, :, None, None]


class LearnableBlock(nn.Module):
    """Two conv-batchnorm-ELU stages, shape preserving; learns the textural
    and structural adjustment applied to the hole path."""

    def __init__(self, channels, hidden=None):
        super().__init__()
        hidden = hidden or channels
        self.block = nn.Sequential(
            nn.Conv2d(channels, hidden, 3, padding=1),
            nn.BatchNorm2d(hidden),
            nn.ELU(),
            nn.Conv2d(hidden, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.ELU(),
        )

    def forward(self, x):
        return self.block(x)


def resample_mask(mask, size):
    """Nearest-neighbor mask resize; keeps values binary."""
    if mask.shape[-2:] == tuple(size):
        return mask
    return F.interpolate(mask, size=size, mode="nearest")


class RegionWiseAttention(nn.Module):
    """Weights hole and background features through separate channel-attention
    paths, masks each to its own region, and fuses the sum with the input.

    Hole path: a gate for features that must change feeds the learnable
    block, a second gate passes features to keep. Background path: one gate
    selecting rebuild features. A 1x1 convolution fuses the concatenation of
    the region sum with the input back to the original width.
    """

    def __init__(self, channels, reduction=16, min_hidden=4, lb_hidden=None):
        super().__init__()
        self.gate_background = ChannelAttention(channels, reduction, min_hidden)
        self.gate_adapt = ChannelAttention(channels, reduction, min_hidden)
        self.gate_keep = ChannelAttention(channels, reduction, min_hidden)
        self.adapt = LearnableBlock(channels, lb_hidden)
        self.fuse = nn.Conv2d(2 * channels, channels, 1)

    def region_features(self, x, mask):
        m = resample_mask(mask, x.shape[-2:]).to(x.dtype)
        fore = m * (self.adapt(self.gate_adapt(x)) + self.gate_keep(x))
        back = (1.0 - m) * self.gate_background(x)
        return fore, back

    def forward(self, x, mask):
        fore, back = self.region_features(x, mask)
        return self.fuse(torch.cat([fore + back, x], dim=1))
