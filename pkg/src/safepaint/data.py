"""Synthetic texture corpus and corpus plumbing.

Images are seeded multi-texture collages (smooth multi-octave noise, soft
stripes, checkerboards) so that foreground/background statistics differ in a
controllable way; that makes region-wise domain gaps measurable without any
external dataset. A directory of user PNGs can stand in for the synthetic
corpus anywhere a Corpus is accepted.
"""

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import zoom

from . import imgio, masks


def _rand_color(rng, low=0.1, high=0.9):
    return rng.uniform(low, high, size=3)


def smooth_noise(rng, size):
    """Multi-octave upsampled noise around a random base color."""
    out = np.zeros((size, size, 3))
    total = 0.0
    for cells, weight in ((4, 1.0), (8, 0.5), (16, 0.25)):
        low = rng.uniform(0.0, 1.0, (cells, cells, 3))
        out += weight * zoom(low, (size / cells, size / cells, 1), order=3)
        total += weight
    out /= total
    base = _rand_color(rng)
    spread = rng.uniform(0.3, 0.9)
    return np.clip(base + spread * (out - 0.5), 0.0, 1.0)


def stripes(rng, size):
    """Soft sinusoidal stripes at a random orientation between two colors."""
    theta = rng.uniform(0.0, np.pi)
    freq = rng.uniform(2.0, 7.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size] / size
    wave = (np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase) + 1) / 2
    c0, c1 = _rand_color(rng), _rand_color(rng)
    return c0 + (c1 - c0) * wave[:, :, None]


def checker(rng, size):
    cell = int(rng.choice([4, 8, 16]))
    yy, xx = np.mgrid[0:size, 0:size]
    pattern = ((yy // cell + xx // cell) % 2).astype(np.float64)
    c0, c1 = _rand_color(rng), _rand_color(rng)
    return c0 + (c1 - c0) * pattern[:, :, None]


_TEXTURES = (smooth_noise, stripes, checker)


def collage(rng, size):
    """Two to four regions, each with an independently sampled texture."""
    layout = rng.integers(0, 3)
    pick = lambda: _TEXTURES[rng.integers(0, len(_TEXTURES))](rng, size)
    img = pick()
    if layout == 0:  # straight split
        cut = int(rng.integers(size // 4, 3 * size // 4))
        other = pick()
        if rng.integers(0, 2):
            img[:cut] = other[:cut]
        else:
            img[:, :cut] = other[:, :cut]
    elif layout == 1:  # inset rectangle
        h = int(rng.integers(size // 4, size // 2))
        w = int(rng.integers(size // 4, size // 2))
        r = int(rng.integers(0, size - h))
        c = int(rng.integers(0, size - w))
        img[r : r + h, c : c + w] = pick()[r : r + h, c : c + w]
    else:  # quadrants
        cut_r = int(rng.integers(size // 3, 2 * size // 3))
        cut_c = int(rng.integers(size // 3, 2 * size // 3))
        img[:cut_r, cut_c:] = pick()[:cut_r, cut_c:]
        img[cut_r:, :cut_c] = pick()[cut_r:, :cut_c]
    return np.clip(img, 0.0, 1.0)


def synthesize_image(seed, index, size):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))
    return collage(rng, size)


@dataclass
class Corpus:
    names: list = field(default_factory=list)
    images: list = field(default_factory=list)

    def __len__(self):
        return len(self.names)

    def __getitem__(self, i):
        return self.names[i], self.images[i]

    @classmethod
    def synthetic(cls, seed, count, size=64):
        names = [f"synth_{i:04d}" for i in range(count)]
        images = [synthesize_image(seed, i, size) for i in range(count)]
        return cls(names, images)

    @classmethod
    def from_dir(cls, path, size=None):
        path = Path(path)
        files = sorted(path.glob("*.png"))
        if not files:
            raise ValueError(f"no PNG images found in {path}")
        names, images = [], []
        for f in files:
            img = imgio.load_image(f)
            if size is not None and img.shape[:2] != (size, size):
                from PIL import Image

                pil = Image.fromarray(imgio.to_uint8(img), "RGB").resize(
                    (size, size), Image.BICUBIC
                )
                img = np.asarray(pil, dtype=np.float64) / 255.0
            names.append(f.stem)
            images.append(img)
        return cls(names, images)

    def split(self, seed, eval_fraction=0.25):
        """Deterministic train/eval split by seeded hash rank of image names.

        Training never sees the eval names: the split depends only on
        (seed, name), not on corpus order.
        """
        keys = [
            hashlib.sha256(f"{seed}:{name}".encode()).hexdigest() for name in self.names
        ]
        order = sorted(range(len(keys)), key=lambda i: keys[i])
        n_eval = int(round(len(keys) * eval_fraction))
        return order[n_eval:], order[:n_eval]

    def write_dir(self, path):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        for name, img in zip(self.names, self.images):
            imgio.save_image(path / f"{name}.png", img)


EVAL_BUCKETS = tuple(masks.MaskBucket(low, low + 10) for low in (10, 30, 50))
TRAIN_BUCKETS = tuple(masks.MaskBucket(low, low + 10) for low in range(0, 60, 10))


def derived_seed(*parts):
    """Stable 63-bit seed from arbitrary labels; the only mask/batch
    randomness source, so resuming mid-run replays the identical stream."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def splice_pairs(corpus, indices, seed, buckets=EVAL_BUCKETS):
    """Naive copy-fill tamper corpus: paste a donor image's pixels into a
    brush-stroke region. Used to train and evaluate the learned probe."""
    indices = list(indices)
    if len(indices) < 2:
        raise ValueError("need at least two images to splice")
    pairs = []
    for k, idx in enumerate(indices):
        img = corpus.images[idx]
        h, w = img.shape[:2]
        bucket = buckets[k % len(buckets)]
        mask = masks.generate_irregular(derived_seed(seed, "splice", k), bucket, h, w)
        donor_idx = indices[(k + 1) % len(indices)]
        donor = corpus.images[donor_idx]
        tampered = masks.composite(img, mask, donor)
        pairs.append((tampered, mask))
    return pairs
