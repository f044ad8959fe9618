"""Statistical tamper-evidence probes and detection scoring.

Each probe turns an image (and sometimes a region mask) into either a scalar
domain gap or a per-pixel evidence heatmap in [0, 1]; detection_metrics turns
a heatmap plus ground-truth mask into AUC / F1 / a sample-level verdict.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

DEFAULT_BINS = 64
DEFAULT_SMOOTHING = 1e-8


def region_histogram(image, region, bins=DEFAULT_BINS, smoothing=DEFAULT_SMOOTHING):
    """Smoothed intensity histogram of the pixels where region == 1.

    Channels are pooled as extra samples. The additive constant keeps every
    bin strictly positive so KL ratios stay finite.
    """
    image = np.asarray(image, dtype=np.float64)
    region = np.asarray(region) >= 0.5
    if not region.any():
        raise ValueError("region is empty")
    samples = image[region].ravel()
    counts, _ = np.histogram(samples, bins=bins, range=(0.0, 1.0))
    freqs = counts / counts.sum() + smoothing
    return freqs / freqs.sum()


def kl_domain_gap(image, mask, bins=DEFAULT_BINS, smoothing=DEFAULT_SMOOTHING):
    """KL divergence of the known region's histogram from the hole's.

    The detectors' working premise: inpainted content whose intensity
    distribution drifts from the surroundings scores a large gap.
    """
    mask = np.asarray(mask)
    p = region_histogram(image, mask < 0.5, bins, smoothing)   # known region
    q = region_histogram(image, mask >= 0.5, bins, smoothing)  # hole
    return float(np.sum(p * np.log(p / q)))


def local_variance_map(image, window=5):
    """Per-pixel variance over a window, min-max scaled to [0, 1].

    Smoothed-over regions (diffusion fills) show up dark against textured
    surroundings. Constant images map to all zeros.
    """
    if window % 2 == 0:
        raise ValueError("window must be odd")
    image = np.asarray(image, dtype=np.float64)
    gray = image.mean(axis=2) if image.ndim == 3 else image
    if window == 1:
        return np.zeros_like(gray)
    half = window // 2
    padded = np.pad(gray, half, mode="edge")
    wins = sliding_window_view(padded, (window, window))
    mean = wins.mean(axis=(2, 3))
    var = np.maximum((wins * wins).mean(axis=(2, 3)) - mean * mean, 0.0)
    span = var.max() - var.min()
    if span <= 0:
        return np.zeros_like(var)
    return (var - var.min()) / span


def patch_similarity_map(image, patch=7, stride=2, tau=0.25):
    """Evidence that blocks have an abnormally similar twin elsewhere.

    Every stride-spaced patch is compared against all non-overlapping
    patches; heat is 1 when the nearest twin's SSD is below tau, otherwise
    exp(-SSD / tau). Heat splats onto covered pixels by max, so both halves
    of a duplicated pair light up.
    """
    if patch % 2 == 0:
        raise ValueError("patch must be odd")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if patch > min(h, w):
        raise ValueError("patch exceeds image")
    arr = image[:, :, None] if image.ndim == 2 else image

    def grid(extent):
        points = np.arange(0, extent - patch + 1, stride)
        last = extent - patch
        if points[-1] != last:  # keep edge pixels covered
            points = np.append(points, last)
        return points

    rows, cols = grid(h), grid(w)
    windows = sliding_window_view(arr, (patch, patch), axis=(0, 1))
    grid = windows[np.ix_(rows, cols)]  # (nr, nc, C, p, p)
    flat = grid.reshape(len(rows) * len(cols), -1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    rr, cc = rr.ravel(), cc.ravel()

    sq = (flat * flat).sum(axis=1)
    ssd = sq[:, None] + sq[None, :] - 2.0 * (flat @ flat.T)
    np.maximum(ssd, 0.0, out=ssd)
    overlap = (np.abs(rr[:, None] - rr[None, :]) < patch) & (
        np.abs(cc[:, None] - cc[None, :]) < patch
    )
    ssd[overlap] = np.inf
    nearest = ssd.min(axis=1)
    heat_vals = np.where(nearest < tau, 1.0, np.exp(-nearest / tau))

    heat = np.zeros((h, w))
    for k in range(len(rr)):
        block = heat[rr[k] : rr[k] + patch, cc[k] : cc[k] + patch]
        np.maximum(block, heat_vals[k], out=block)
    return heat


@dataclass
class DetectionReport:
    auc: float
    f1: float
    flagged: bool

    def as_dict(self):
        return {"auc": self.auc, "f1": self.f1, "flagged": self.flagged}


def auc_score(heatmap, gt):
    """Probability a random tampered pixel outranks a random clean one.

    Ties earn half credit (Mann-Whitney with average ranks), so a constant
    heatmap scores exactly 0.5.
    """
    scores = np.asarray(heatmap, dtype=np.float64).ravel()
    labels = (np.asarray(gt).ravel() >= 0.5)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both tampered and clean pixels in gt")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def detection_metrics(heatmap, gt, threshold=0.5, coverage_rule=0.25):
    """Score a heatmap against a ground-truth tamper mask.

    flagged follows the coverage convention: the sample counts as detected
    ("forged") when the binarized map covers strictly more than
    coverage_rule of the tampered pixels.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    gt = np.asarray(gt)
    if heatmap.shape != gt.shape:
        raise ValueError("heatmap/gt shape mismatch")
    auc = auc_score(heatmap, gt)

    pred = heatmap >= threshold
    truth = gt >= 0.5
    tp = float(np.sum(pred & truth))
    fp = float(np.sum(pred & ~truth))
    fn = float(np.sum(~pred & truth))
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom > 0 else 0.0
    coverage = tp / float(truth.sum())
    return DetectionReport(auc=auc, f1=f1, flagged=bool(coverage > coverage_rule))


def _highpass_frontend():
    """Fixed residual filter bank (laplacian, dx, dy per channel).

    Content is stripped before learning so the detector keys on noise and
    seam statistics rather than memorizing textures.
    """
    import torch
    import torch.nn as nn

    kernels = torch.tensor(
        [
            [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]],
            [[0.0, 0.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
            [[0.0, -1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
        ]
    )
    conv = nn.Conv2d(3, 9, 3, padding=1, bias=False)
    with torch.no_grad():
        conv.weight.zero_()
        for channel in range(3):
            for f, kernel in enumerate(kernels):
                conv.weight[channel * 3 + f, channel] = kernel
    conv.weight.requires_grad_(False)
    return conv


class PatchDetector:
    """Small seeded convolutional tamper localizer.

    A fixed high-pass front end feeding a dilated fully-convolutional net
    that scores each pixel's neighborhood; the stand-in for the pretrained
    forgery detectors in the evaluation harness. Deterministic given its
    seed.
    """

    def __init__(self, seed=0, width=16):
        import torch
        import torch.nn as nn

        self.seed = seed
        gen = torch.Generator().manual_seed(int(seed))
        layers = [_highpass_frontend()]
        in_ch = 9
        for dilation in (1, 2, 4, 8, 16):
            conv = nn.Conv2d(in_ch, width, 3, padding=dilation, dilation=dilation)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.1)
                conv.bias.zero_()
            layers += [conv, nn.ReLU()]
            in_ch = width
        head = nn.Conv2d(in_ch, 1, 1)
        with torch.no_grad():
            head.weight.copy_(torch.randn(head.weight.shape, generator=gen) * 0.1)
            head.bias.zero_()
        layers.append(head)
        self.net = nn.Sequential(*layers)

    def heatmap(self, image):
        """Per-pixel tamper probability in [0, 1]."""
        import torch

        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = np.stack([image] * 3, axis=-1)
        x = torch.from_numpy(image.transpose(2, 0, 1)[None]).float()
        self.net.eval()
        with torch.no_grad():
            logits = self.net(x)
        return torch.sigmoid(logits)[0, 0].numpy().astype(np.float64)

    def state_dict(self):
        return self.net.state_dict()

    def load_state_dict(self, state):
        self.net.load_state_dict(state)


def train_patch_detector(pairs, seed=0, steps=400, lr=2e-3, width=16):
    """Fit a PatchDetector on (image, tamper-mask) pairs.

    pairs must expose at least one tampered and one clean pixel overall.
    Training order, batching, and initialization are all derived from seed.
    """
    import torch

    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty corpus")
    total_pos = sum(float(np.sum(np.asarray(m) >= 0.5)) for _, m in pairs)
    total_px = sum(int(np.asarray(m).size) for _, m in pairs)
    if total_pos == 0 or total_pos == total_px:
        raise ValueError("corpus must contain both tampered and clean pixels")

    detector = PatchDetector(seed=seed, width=width)
    if steps == 0:
        return detector
    images = torch.stack(
        [
            torch.from_numpy(np.asarray(img, dtype=np.float64).transpose(2, 0, 1)).float()
            for img, _ in pairs
        ]
    )
    targets = torch.stack(
        [torch.from_numpy((np.asarray(m) >= 0.5).astype(np.float32))[None] for _, m in pairs]
    )
    opt = torch.optim.Adam(
        [p for p in detector.net.parameters() if p.requires_grad], lr=lr
    )
    bce = torch.nn.BCEWithLogitsLoss()
    rng = np.random.default_rng(seed)
    batch = min(8, len(pairs))
    detector.net.train()
    for _ in range(steps):
        idx = rng.choice(len(pairs), size=batch, replace=False)
        logits = detector.net(images[idx])
        loss = bce(logits, targets[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
    detector.net.eval()
    return detector
