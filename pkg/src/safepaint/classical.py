"""Classical inpainting baselines: PDE transport diffusion and exemplar
patch copying.

Both are the traditional methods whose statistical footprints the forensic
probes key on; they double as comparison baselines in the evaluation harness.
Neither ever touches known pixels.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class DiffusionConfig:
    delta_v: float = 0.1
    max_iters: int = 5000
    eps: float = 1e-6
    # every k-th sweep applies a plain (isotropic) smoothing pass inside the
    # hole; the raw explicit transport update is unstable without it
    stabilize_every: int = 3

    def __post_init__(self):
        if self.delta_v <= 0:
            raise ValueError("delta_v must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")


def _pad(a):
    return np.pad(a, 1, mode="edge")


def _laplacian(a):
    p = _pad(a)
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * a


def _central_grad(a):
    p = _pad(a)
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    return gy, gx


def _transport_update(channel):
    """Change of the smoothness term carried along the isophote direction."""
    lap = _laplacian(channel)
    ly, lx = _central_grad(lap)
    gy, gx = _central_grad(channel)
    norm = np.sqrt(gx * gx + gy * gy)
    safe = np.where(norm < 1e-8, 1.0, norm)
    ny = np.where(norm < 1e-8, 0.0, -gx / safe)
    nx = np.where(norm < 1e-8, 0.0, gy / safe)
    return ly * ny + lx * nx


def diffuse_inpaint(image, mask, cfg=None, return_residuals=False):
    """Propagate known pixels into the hole by iterated isophote transport.

    Each sweep updates only hole pixels with delta_v times the update field;
    every cfg.stabilize_every-th sweep the update field is the plain
    Laplacian, which keeps the explicit scheme stable. Stops when the mean
    absolute update over the hole drops below cfg.eps.
    """
    cfg = cfg or DiffusionConfig()
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if image.shape[:2] != mask.shape:
        raise ValueError("image/mask shape mismatch")
    if np.all(mask >= 0.5):
        raise ValueError("mask covers the whole image; no known region to diffuse from")
    hole = mask >= 0.5
    if not hole.any():
        return (image.copy(), []) if return_residuals else image.copy()

    single = image.ndim == 2
    channels = image[:, :, None].copy() if single else image.copy()
    residuals = []
    for n in range(cfg.max_iters):
        smooth_pass = cfg.stabilize_every and (n % cfg.stabilize_every == cfg.stabilize_every - 1)
        resid = 0.0
        for c in range(channels.shape[2]):
            ch = channels[:, :, c]
            update = _laplacian(ch) if smooth_pass else _transport_update(ch)
            ch[hole] += cfg.delta_v * update[hole]
            resid += float(np.abs(update[hole]).mean())
        np.clip(channels, 0.0, 1.0, out=channels)
        resid /= channels.shape[2]
        residuals.append(resid)
        if resid < cfg.eps:
            break
    out = channels[:, :, 0] if single else channels
    return (out, residuals) if return_residuals else out


@dataclass
class Patch:
    """Square odd-sided window of pixels anchored at `center` (row, col)."""

    center: tuple
    size: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.size % 2 == 0:
            raise ValueError("patch size must be odd")
        if self.pixels.shape[:2] != (self.size, self.size):
            raise ValueError("pixel block does not match declared size")


def extract_patch(image, center, size):
    half = size // 2
    r, c = center
    h, w = image.shape[:2]
    if not (half <= r < h - half and half <= c < w - half):
        raise ValueError(f"patch at {center} size {size} exceeds image bounds")
    return Patch(center, size, image[r - half : r + half + 1, c - half : c + half + 1])


def patch_distance(a, b, valid):
    """Euclidean distance between two patches over the valid pixels only."""
    pa = a.pixels if isinstance(a, Patch) else np.asarray(a, dtype=np.float64)
    pb = b.pixels if isinstance(b, Patch) else np.asarray(b, dtype=np.float64)
    if pa.shape != pb.shape:
        raise ValueError("patch shape mismatch")
    valid = np.asarray(valid, dtype=np.float64)
    if valid.shape != pa.shape[:2]:
        raise ValueError("valid mask shape mismatch")
    if not (valid >= 0.5).any():
        raise ValueError("no valid pixels to compare")
    v = valid[:, :, None] if pa.ndim == 3 else valid
    return float(np.sqrt((v * (pa - pb) ** 2).sum()))


def _to_gray(image):
    return image.mean(axis=2) if image.ndim == 3 else image


def exemplar_inpaint(image, mask, patch_size=9):
    """Fill the hole patch by patch with verbatim copies from the known region.

    Fill order follows a priority of confidence (filled fraction in the
    window) times a data term |isophote . front normal| + 1e-3. The source is
    the candidate window fully inside the original known region with minimum
    SSD over the target's already-filled pixels; ties go to the smallest
    (row, col) in scan order.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if image.shape[:2] != mask.shape:
        raise ValueError("image/mask shape mismatch")
    if patch_size % 2 == 0:
        raise ValueError("patch size must be odd")
    h, w = mask.shape
    if patch_size > min(h, w):
        raise ValueError("patch size exceeds image")
    half = patch_size // 2

    single = image.ndim == 2
    out = image[:, :, None].copy() if single else image.copy()
    filled = mask < 0.5  # True where pixel content is trusted
    if filled.all():
        return image.copy()

    # candidate source windows: fully inside the image and fully in the
    # original known region (their pixels never change during filling)
    known_windows = sliding_window_view(filled, (patch_size, patch_size))
    candidate_ok = known_windows.all(axis=(2, 3))
    if not candidate_ok.any():
        raise ValueError("known region contains no full source patch")
    cand_rows, cand_cols = np.nonzero(candidate_ok)  # already in scan order
    windows = sliding_window_view(out, (patch_size, patch_size), axis=(0, 1))
    cand_windows = windows[cand_rows, cand_cols]  # (n, C, ps, ps)

    confidence = filled.astype(np.float64)

    while not filled.all():
        front = _fill_front(filled)
        rows, cols = np.nonzero(front)
        pr, pc = _best_front_pixel(out, filled, confidence, rows, cols, half)
        r0, r1 = max(pr - half, 0), min(pr + half + 1, h)
        c0, c1 = max(pc - half, 0), min(pc + half + 1, w)
        target = out[r0:r1, c0:c1]
        target_valid = filled[r0:r1, c0:c1]

        th, tw = target.shape[:2]
        # offset of the (possibly border-truncated) target inside a full window
        o_r, o_c = r0 - (pr - half), c0 - (pc - half)
        diff = cand_windows[:, :, o_r : o_r + th, o_c : o_c + tw] - target.transpose(2, 0, 1)
        ssd = (diff * diff * target_valid[None, None]).sum(axis=(1, 2, 3))
        best = int(np.argmin(ssd))  # first minimum = smallest (row, col)
        src_r, src_c = int(cand_rows[best]) + o_r, int(cand_cols[best]) + o_c

        source = out[src_r : src_r + th, src_c : src_c + tw]
        hole_px = ~target_valid
        target[hole_px] = source[hole_px]
        conf_patch = confidence[r0:r1, c0:c1]
        conf_patch[hole_px] = conf_patch[target_valid].mean() if target_valid.any() else 0.0
        filled[r0:r1, c0:c1] = True

    return out[:, :, 0] if single else out


def _fill_front(filled):
    p = np.pad(filled, 1, mode="edge")
    has_filled_nbr = p[:-2, 1:-1] | p[2:, 1:-1] | p[1:-1, :-2] | p[1:-1, 2:]
    return ~filled & has_filled_nbr


def _best_front_pixel(out, filled, confidence, rows, cols, half):
    gray = _to_gray(out)
    gy, gx = _central_grad(gray)
    my, mx = _central_grad(filled.astype(np.float64))
    h, w = filled.shape
    best = (-1.0, None)
    for r, c in zip(rows, cols):
        r0, r1 = max(r - half, 0), min(r + half + 1, h)
        c0, c1 = max(c - half, 0), min(c + half + 1, w)
        conf = confidence[r0:r1, c0:c1].mean()
        nvec = np.array([my[r, c], mx[r, c]])
        nn = np.linalg.norm(nvec)
        nvec = nvec / nn if nn > 1e-8 else nvec * 0.0
        iso = np.array([-gx[r, c], gy[r, c]])  # isophote: perpendicular to gradient
        data = abs(iso @ nvec) + 1e-3
        score = conf * data
        if score > best[0]:
            best = (score, (r, c))
    return best[1]


