"""PNG image I/O. All persisted images are lossless PNG; JPEG appears only
through the explicit jpeg_roundtrip post-processing step."""

import numpy as np
from PIL import Image


def to_uint8(image):
    return np.round(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, image):
    arr = to_uint8(image)
    mode = "RGB" if arr.ndim == 3 else "L"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def load_image(path, channels=3):
    mode = "RGB" if channels == 3 else "L"
    arr = np.asarray(Image.open(path).convert(mode), dtype=np.float64) / 255.0
    return arr


def save_heatmap(path, heatmap):
    """Heatmaps persist as grayscale PNG, 0 = clean, 255 = max evidence."""
    Image.fromarray(to_uint8(heatmap), mode="L").save(path, format="PNG")
