"""Image loading and the resize/crop preprocessing contract.

Every image is bilinearly resized to 256x256; training samples take five
crops (four corners plus center), inference takes the single center crop.
Tensors are normalized with the ImageNet channel statistics the pretrained
models expect.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from cnn_adapter.formats import ManifestEntry

RESIZE_TARGET = 256

_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def load_rgb(path: str) -> np.ndarray:
    with Image.open(path) as img:
        resized = img.convert("RGB").resize((RESIZE_TARGET, RESIZE_TARGET),
                                            Image.Resampling.BILINEAR)
        return np.asarray(resized, dtype=np.uint8)


def crop_offsets(crop_size: int, mode: str) -> list[tuple[int, int]]:
    span = RESIZE_TARGET - crop_size
    center = (span // 2, span // 2)
    if mode == "test":
        return [center]
    return [(0, 0), (0, span), (span, 0), (span, span), center]


def to_tensor(pixels: np.ndarray) -> torch.Tensor:
    scaled = pixels.astype(np.float32) / 255.0
    normalized = (scaled - _MEAN) / _STD
    return torch.from_numpy(normalized.transpose(2, 0, 1).copy())


class CropDataset(torch.utils.data.Dataset):
    """(entry, crop) pairs over one manifest split."""

    def __init__(self, entries: list[ManifestEntry], classes: list[str],
                 crop_size: int, mode: str, train_crops: int = 5):
        if crop_size > RESIZE_TARGET:
            raise ValueError(f"crop size {crop_size} exceeds {RESIZE_TARGET}")
        self.entries = entries
        self.class_index = {label: i for i, label in enumerate(classes)}
        self.crop_size = crop_size
        offsets = crop_offsets(crop_size, mode)
        if mode == "train" and train_crops == 1:
            offsets = offsets[-1:]  # center crop only
        self.samples = [(entry, offset) for entry in entries for offset in offsets]

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, int]:
        entry, (top, left) = self.samples[index]
        pixels = load_rgb(entry.path)
        crop = pixels[top : top + self.crop_size, left : left + self.crop_size]
        return to_tensor(crop), self.class_index[entry.subject]


def training_entries(entries: list[ManifestEntry]) -> list[ManifestEntry]:
    """The train split when one is assigned, otherwise every entry."""
    train = [e for e in entries if e.split == "train"]
    return train if train else list(entries)
