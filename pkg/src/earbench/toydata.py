"""Synthetic texture dataset for pipeline smoke runs and demos.

Each subject owns a distinct procedural texture: eight sinusoidal gratings
(two frequencies crossed with four orientations) plus two checkerboards.
Per-image variation comes from seeded phase shifts, additive noise, and
brightness offsets. Fully deterministic for a fixed seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from earbench.common import DEFAULT_SEED, derive_seed
from earbench.images import save_image

MAX_SUBJECTS = 10

# Orientations avoid mirror pairs (theta and 180-theta both present would
# collide with flip augmentation, as left/right ear mirroring does).
_GRATING_FREQUENCIES = (1 / 16, 1 / 6)
_GRATING_ORIENTATIONS = (0.0, 30.0, 60.0, 90.0)
_CHECKER_PERIODS = (5, 11)


def _grating(freq: float, theta_deg: float, phase: float, size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = np.deg2rad(theta_deg)
    wave = np.sin(2 * np.pi * freq * (x * np.cos(theta) + y * np.sin(theta)) + phase)
    return 128.0 + 60.0 * wave


def _checkerboard(period: int, shift: tuple[int, int], size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    cells = ((y + shift[0]) // period + (x + shift[1]) // period) % 2
    return np.where(cells == 0, 60.0, 190.0)


def toy_image(subject_index: int, image_index: int, size: int = 128,
              seed: int = DEFAULT_SEED) -> np.ndarray:
    """One deterministic toy sample for (subject, image) indices."""
    if not 0 <= subject_index < MAX_SUBJECTS:
        raise ValueError(f"subject index must be in [0, {MAX_SUBJECTS})")
    rng = np.random.default_rng(derive_seed(seed, "toy", subject_index, image_index))
    if subject_index < 8:
        freq = _GRATING_FREQUENCIES[subject_index % 2]
        theta = _GRATING_ORIENTATIONS[subject_index // 2]
        base = _grating(freq, theta, rng.uniform(0.0, 2 * np.pi), size)
    else:
        period = _CHECKER_PERIODS[subject_index - 8]
        shift = (int(rng.integers(0, 4 * period)), int(rng.integers(0, 4 * period)))
        base = _checkerboard(period, shift, size)
    noisy = base + rng.normal(0.0, 4.0, base.shape) + float(rng.integers(-20, 21))
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def generate_toy_dataset(
    root: str | Path,
    subjects: int = 10,
    images_per_subject: int = 6,
    size: int = 128,
    seed: int = DEFAULT_SEED,
) -> int:
    """Write <root>/s<k>/s<k>_i<j>.png files; returns the image count."""
    if not 1 <= subjects <= MAX_SUBJECTS:
        raise ValueError(f"subjects must be in [1, {MAX_SUBJECTS}]")
    root = Path(root)
    count = 0
    for k in range(subjects):
        subject_dir = root / f"s{k:02d}"
        subject_dir.mkdir(parents=True, exist_ok=True)
        for j in range(images_per_subject):
            save_image(toy_image(k, j, size=size, seed=seed),
                       subject_dir / f"s{k:02d}_i{j:02d}.png")
            count += 1
    return count
