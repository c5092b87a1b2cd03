"""Image decoding and the preprocessing applied before the forward pass."""

import numpy as np
from PIL import Image


class ImageDecodeError(ValueError):
    """The file at hand is not a readable image."""


def decode_rgb(path) -> Image.Image:
    """Open an image as RGB; any decoder failure becomes ImageDecodeError."""
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except Exception as exc:  # PIL signals broken files with several types
        raise ImageDecodeError(f"{path}: {exc}") from exc


def resize_dims(height: int, width: int, max_min_side: int):
    """Target dims under the downscale-only rule.

    Images whose short side exceeds ``max_min_side`` shrink, preserving
    aspect ratio, until the short side equals it; smaller images pass
    through untouched (never upscaled).
    """
    if min(height, width) <= max_min_side:
        return height, width
    scale = max_min_side / min(height, width)
    if height <= width:
        return max_min_side, max(1, round(width * scale))
    return max(1, round(height * scale)), max_min_side


def preprocess(image: Image.Image, max_min_side: int, mean_pixel) -> np.ndarray:
    """Resize if oversized, then zero-center raw RGB values.

    Returns a float32 (H, W, 3) array of 0-255 pixel values minus the
    per-channel mean; no further scaling, matching the convention of the
    original VGG-16 release.
    """
    target_h, target_w = resize_dims(image.height, image.width, max_min_side)
    if (target_h, target_w) != (image.height, image.width):
        image = image.resize((target_w, target_h), Image.Resampling.BICUBIC)
    pixels = np.asarray(image, dtype=np.float32)
    return pixels - np.asarray(mean_pixel, dtype=np.float32)


def hflip(image: np.ndarray) -> np.ndarray:
    """Mirror the width axis: the network sees a genuinely flipped photo."""
    return np.ascontiguousarray(image[:, ::-1, :])
