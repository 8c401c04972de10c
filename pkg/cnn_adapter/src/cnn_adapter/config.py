"""Fine-tuning configuration, loaded from a JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

ARCHITECTURES = ("alexnet", "vgg16", "googlenet")

# Per-architecture defaults: global learning rate and training crop size.
DEFAULT_BASE_LR = {"alexnet": 0.0001, "googlenet": 0.0001, "vgg16": 0.001}
DEFAULT_CROP_SIZE = {"alexnet": 227, "googlenet": 224, "vgg16": 224}


@dataclass
class FineTuneConfig:
    architecture: str
    stage1_manifest: str
    stage2_manifest: str
    output: str
    weights: str = "imagenet"  # "imagenet", "none" (random init), or a state-dict path
    base_lr: float | None = None
    last_layer_lr_multiplier: float = 10.0
    lr_decay_every: int = 20_000  # iterations; applied to every architecture
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    batch_size: int = 64
    max_iterations: int = 50_000  # per-stage cap
    epochs: int | None = None  # per-stage epoch count; None runs to max_iterations
    train_crops: int = 5  # five-crop expansion of each training image
    crop_size: int | None = None
    seed: int = 42
    skip_stage1: bool = False  # one-stage baseline: pretrained -> stage2 only

    def __post_init__(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, "
                             f"got {self.architecture!r}")
        if self.base_lr is None:
            self.base_lr = DEFAULT_BASE_LR[self.architecture]
        if self.crop_size is None:
            self.crop_size = DEFAULT_CROP_SIZE[self.architecture]
        if self.train_crops not in (1, 5):
            raise ValueError("train_crops must be 1 or 5")
        if self.batch_size < 1 or self.max_iterations < 1:
            raise ValueError("batch_size and max_iterations must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "FineTuneConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        missing = {"architecture", "stage1_manifest", "stage2_manifest", "output"} - set(raw)
        if missing:
            raise ValueError(f"{path}: missing required keys {sorted(missing)}")
        return cls(**raw)
