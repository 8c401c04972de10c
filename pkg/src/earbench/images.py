"""Image primitives: decode/encode, grayscale, resize, mirroring, crops.

Images are plain numpy uint8 arrays, either (H, W) grayscale or (H, W, 3)
RGB. All functions are pure and deterministic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

# Edge length every image is resized to before cropping.
RESIZE_TARGET = 256

# ITU-R 601 luma weights, results rounded to nearest integer.
_LUMA = np.array([0.299, 0.587, 0.114])

SIDES = ("left", "right")


def validate_image(pixels: np.ndarray) -> None:
    if not isinstance(pixels, np.ndarray) or pixels.dtype != np.uint8:
        raise ValueError("image must be a numpy uint8 array")
    if pixels.ndim == 3 and pixels.shape[2] != 3:
        raise ValueError(f"color image must have 3 channels, got {pixels.shape[2]}")
    if pixels.ndim not in (2, 3):
        raise ValueError(f"image must be HxW or HxWx3, got shape {pixels.shape}")
    if pixels.shape[0] < 1 or pixels.shape[1] < 1:
        raise ValueError("image must have positive width and height")


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file to uint8; grayscale stays 2-D, everything else RGB."""
    with Image.open(path) as img:
        if img.mode == "L":
            return np.asarray(img, dtype=np.uint8)
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    """Write a lossless PNG; byte output is deterministic for fixed pixels."""
    validate_image(pixels)
    Image.fromarray(pixels).save(path, format="PNG")


def image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the file header, without decoding pixel data."""
    with Image.open(path) as img:
        return img.size


def is_decodable(path: str | Path) -> bool:
    try:
        with Image.open(path) as img:
            img.size
        return True
    except (UnidentifiedImageError, OSError):
        return False


def to_grayscale(pixels: np.ndarray) -> np.ndarray:
    validate_image(pixels)
    if pixels.ndim == 2:
        return pixels.copy()
    luma = pixels.astype(np.float64) @ _LUMA
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def mean_intensity(pixels: np.ndarray) -> float:
    return float(to_grayscale(pixels).mean())


def resize_bilinear(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize; returns an unchanged copy when already at target size."""
    validate_image(pixels)
    if pixels.shape[0] == height and pixels.shape[1] == width:
        return pixels.copy()
    resized = Image.fromarray(pixels).resize((width, height), Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.uint8)


def mirror_horizontal(pixels: np.ndarray) -> np.ndarray:
    validate_image(pixels)
    return np.ascontiguousarray(pixels[:, ::-1])


def align_side(pixels: np.ndarray, side: str, target_side: str) -> np.ndarray:
    """Mirror the image iff its side differs from the target side.

    The side must be known; for unknown sides the caller has to either skip
    the image or record a side override first.
    """
    if side not in SIDES:
        raise ValueError(
            f"side is {side!r}: skip this image or provide a side override before aligning"
        )
    if target_side not in SIDES:
        raise ValueError(f"target side must be one of {SIDES}, got {target_side!r}")
    if side == target_side:
        return pixels.copy()
    return mirror_horizontal(pixels)


def crop(pixels: np.ndarray, top: int, left: int, height: int, width: int) -> np.ndarray:
    if top < 0 or left < 0 or top + height > pixels.shape[0] or left + width > pixels.shape[1]:
        raise ValueError("crop window outside image bounds")
    return pixels[top : top + height, left : left + width].copy()


def preprocess(pixels: np.ndarray, mode: str, crop_size: int) -> list[np.ndarray]:
    """Resize to RESIZE_TARGET squared, then crop.

    Train mode returns five crops (four corners plus center, in that order);
    test mode returns the center crop only. crop_size must not exceed the
    resize target.
    """
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    if crop_size > RESIZE_TARGET:
        raise ValueError(f"crop size {crop_size} exceeds resize target {RESIZE_TARGET}")
    if crop_size < 1:
        raise ValueError("crop size must be positive")
    resized = resize_bilinear(pixels, RESIZE_TARGET, RESIZE_TARGET)
    span = RESIZE_TARGET - crop_size
    center = (span // 2, span // 2)
    if mode == "test":
        corners = [center]
    else:
        corners = [(0, 0), (0, span), (span, 0), (span, span), center]
    return [crop(resized, top, left, crop_size, crop_size) for top, left in corners]
