"""Deterministic augmentation: an enumerable transform grid plus an executor.

The "full" grid expands every training image by one output per grid value
per family:

    brightness_add   -55..+55 step 10          (12)
    brightness_mul   0.5..1.5 step 0.1         (11)
    blur sigma       0.25..2.0 eight values     (8)
    sharpen          0.5..2.0 step 0.1         (16)
    rotate degrees   -20..+20 step 5            (9)
    shear degrees    -15..+15 step 5            (7)
    dropout rate     {0.01, 0.05}               (2)   toolkit default
    contrast alpha   {0.5, 0.75, 1.25, 1.5}     (4)   toolkit default
    scale factor     {0.9, 1.1}                 (2)   toolkit default
    translate frac   {-0.1, +0.1}               (2)   toolkit default
    random crops     crop_count                 (5)   toolkit default
    flip             one, only in unaligned mode

Stochastic families (crop offsets, dropout masks) are pure functions of the
spec's 64-bit seed, so outputs never depend on execution order or worker
count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy import ndimage

from earbench.common import DEFAULT_SEED, DataError, derive_seed
from earbench.images import load_image, mirror_horizontal, save_image, validate_image
from earbench.manifest import DatasetManifest, ManifestEntry

FAMILIES = ("crop", "flip", "brightness_add", "brightness_mul", "blur", "sharpen",
            "dropout", "contrast", "scale", "translate", "rotate", "shear")

STOCHASTIC_FAMILIES = ("crop", "dropout")

# Random crops take this fraction of each source dimension (224/256).
CROP_FRACTION = 0.875


def _grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


@dataclass(frozen=True)
class TransformSpec:
    """One concrete transform: a family, its grid value, and a seed.

    The seed matters only for the stochastic families; deterministic
    families ignore it.
    """

    family: str
    parameter: float | int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unsupported transform family {self.family!r}")

    @property
    def parameter_text(self) -> str:
        if isinstance(self.parameter, int):
            return str(self.parameter)
        return format(self.parameter, "g")


@dataclass(frozen=True)
class AugmentConfig:
    """Grid of augmentation parameters; empty tuples disable a family."""

    brightness_add_values: tuple[int, ...] = tuple(range(-55, 56, 10))
    brightness_mul_values: tuple[float, ...] = _grid(0.5, 1.5, 0.1)
    blur_sigmas: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    sharpen_values: tuple[float, ...] = _grid(0.5, 2.0, 0.1)
    rotation_degrees: tuple[float, ...] = tuple(range(-20, 21, 5))
    shear_degrees: tuple[float, ...] = tuple(range(-15, 16, 5))
    dropout_rates: tuple[float, ...] = (0.01, 0.05)
    contrast_alphas: tuple[float, ...] = (0.5, 0.75, 1.25, 1.5)
    scale_factors: tuple[float, ...] = (0.9, 1.1)
    translate_fractions: tuple[float, ...] = (-0.1, 0.1)
    crop_count: int = 5
    flip_enabled: bool = True

    def __post_init__(self) -> None:
        if self.crop_count < 0:
            raise ValueError("crop_count must be >= 0")
        if any(s <= 0 for s in self.blur_sigmas):
            raise ValueError("blur sigmas must be > 0")
        if any(not 0.0 < r < 1.0 for r in self.dropout_rates):
            raise ValueError("dropout rates must lie strictly in (0, 1)")
        if any(s <= 0 for s in self.scale_factors):
            raise ValueError("scale factors must be > 0")
        if any(m < 0 for m in self.brightness_mul_values):
            raise ValueError("brightness multipliers must be >= 0")
        if any(a < 0 for a in self.contrast_alphas):
            raise ValueError("contrast alphas must be >= 0")
        if any(abs(f) >= 1.0 for f in self.translate_fractions):
            raise ValueError("translate fractions must lie in (-1, 1)")

    @classmethod
    def reduced(cls) -> "AugmentConfig":
        """Smaller preset for quick experiments and controlled-capture sets."""
        return cls(
            brightness_add_values=(-40, -20, 20, 40),
            brightness_mul_values=(0.8, 1.2),
            blur_sigmas=(0.5, 1.0),
            sharpen_values=(1.0, 1.5),
            rotation_degrees=(-10, 10),
            shear_degrees=(-10, 10),
            dropout_rates=(0.01,),
            contrast_alphas=(0.75, 1.25),
            scale_factors=(0.9, 1.1),
            translate_fractions=(-0.1, 0.1),
            crop_count=2,
            flip_enabled=True,
        )

    def to_file(self, path: str | Path) -> None:
        lines = []
        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, tuple):
                text = ",".join(format(v, "g") for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = str(value)
            lines.append(f"{field.name}={text}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "AugmentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs: dict[str, object] = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in known:
                raise DataError(f"{path}:{lineno}: unknown key {key!r}")
            raw = raw.strip()
            if key == "crop_count":
                kwargs[key] = int(raw)
            elif key == "flip_enabled":
                if raw.lower() not in ("true", "false"):
                    raise DataError(f"{path}:{lineno}: flip_enabled must be true or false")
                kwargs[key] = raw.lower() == "true"
            elif key == "brightness_add_values":
                kwargs[key] = tuple(int(v) for v in raw.split(",")) if raw else ()
            else:
                kwargs[key] = tuple(float(v) for v in raw.split(",")) if raw else ()
        try:
            return cls(**kwargs)  # type: ignore[arg-type]
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: {exc}") from exc


def plan_augmentations(config: AugmentConfig, aligned_mode: bool = False) -> list[TransformSpec]:
    """Enumerate one spec per grid value per family, in a fixed order.

    Flip is emitted only in unaligned mode: once images have been mirrored
    to a single side, a flipped copy would leak the other side back in.
    """
    plan: list[TransformSpec] = []
    for index in range(config.crop_count):
        plan.append(TransformSpec("crop", index))
    if config.flip_enabled and not aligned_mode:
        plan.append(TransformSpec("flip", 1))
    for value in config.brightness_add_values:
        plan.append(TransformSpec("brightness_add", int(value)))
    for value in config.brightness_mul_values:
        plan.append(TransformSpec("brightness_mul", float(value)))
    for value in config.blur_sigmas:
        plan.append(TransformSpec("blur", float(value)))
    for value in config.sharpen_values:
        plan.append(TransformSpec("sharpen", float(value)))
    for value in config.dropout_rates:
        plan.append(TransformSpec("dropout", float(value)))
    for value in config.contrast_alphas:
        plan.append(TransformSpec("contrast", float(value)))
    for value in config.scale_factors:
        plan.append(TransformSpec("scale", float(value)))
    for value in config.translate_fractions:
        plan.append(TransformSpec("translate", float(value)))
    for value in config.rotation_degrees:
        plan.append(TransformSpec("rotate", float(value)))
    for value in config.shear_degrees:
        plan.append(TransformSpec("shear", float(value)))
    return plan


def _clip_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(values, 0, 255).astype(np.uint8)


def _per_channel(pixels: np.ndarray, func) -> np.ndarray:
    if pixels.ndim == 2:
        return func(pixels)
    return np.stack([func(pixels[..., c]) for c in range(pixels.shape[2])], axis=-1)


def _affine(pixels: np.ndarray, matrix: np.ndarray, offset: np.ndarray) -> np.ndarray:
    def one(channel: np.ndarray) -> np.ndarray:
        out = ndimage.affine_transform(channel.astype(np.float64), matrix,
                                       offset=offset, order=1, mode="nearest")
        return np.rint(out)
    return _clip_u8(_per_channel(pixels, one))


def _rotate(pixels: np.ndarray, degrees: float) -> np.ndarray:
    if degrees == 0:
        return pixels.copy()
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    center = (np.array(pixels.shape[:2], dtype=np.float64) - 1.0) / 2.0
    matrix = np.array([[cos, -sin], [sin, cos]])
    offset = center - matrix @ center
    return _affine(pixels, matrix, offset)


def _shear(pixels: np.ndarray, degrees: float) -> np.ndarray:
    if degrees == 0:
        return pixels.copy()
    slope = np.tan(np.deg2rad(degrees))
    center_y = (pixels.shape[0] - 1) / 2.0
    # horizontal shear: source x = x + slope * (y - center_y)
    matrix = np.array([[1.0, 0.0], [slope, 1.0]])
    offset = np.array([0.0, -slope * center_y])
    return _affine(pixels, matrix, offset)


def _scale(pixels: np.ndarray, factor: float) -> np.ndarray:
    if factor == 1.0:
        return pixels.copy()
    center = (np.array(pixels.shape[:2], dtype=np.float64) - 1.0) / 2.0
    matrix = np.diag([1.0 / factor, 1.0 / factor])
    offset = center - matrix @ center
    return _affine(pixels, matrix, offset)


def _translate(pixels: np.ndarray, fraction: float) -> np.ndarray:
    height, width = pixels.shape[:2]
    dy = int(round(fraction * height))
    dx = int(round(fraction * width))
    if dy == 0 and dx == 0:
        return pixels.copy()
    rows = np.clip(np.arange(height) - dy, 0, height - 1)
    cols = np.clip(np.arange(width) - dx, 0, width - 1)
    return pixels[rows][:, cols].copy()


def _blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    def one(channel: np.ndarray) -> np.ndarray:
        return np.rint(ndimage.gaussian_filter(channel.astype(np.float64), sigma, mode="nearest"))
    return _clip_u8(_per_channel(pixels, one))


def _sharpen(pixels: np.ndarray, lightness: float) -> np.ndarray:
    kernel = np.array([[-1.0, -1.0, -1.0],
                       [-1.0, 8.0 + lightness, -1.0],
                       [-1.0, -1.0, -1.0]])

    def one(channel: np.ndarray) -> np.ndarray:
        return np.rint(ndimage.convolve(channel.astype(np.float64), kernel, mode="nearest"))
    return _clip_u8(_per_channel(pixels, one))


def _dropout(pixels: np.ndarray, rate: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mask = rng.random(pixels.shape[:2]) < rate
    out = pixels.copy()
    out[mask] = 0
    return out


def _crop_random(pixels: np.ndarray, seed: int) -> np.ndarray:
    height, width = pixels.shape[:2]
    crop_h = max(1, int(round(height * CROP_FRACTION)))
    crop_w = max(1, int(round(width * CROP_FRACTION)))
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, height - crop_h + 1))
    left = int(rng.integers(0, width - crop_w + 1))
    return pixels[top : top + crop_h, left : left + crop_w].copy()


def apply_transform(pixels: np.ndarray, spec: TransformSpec) -> np.ndarray:
    """Execute one transform; identity parameters return pixelwise-equal copies."""
    validate_image(pixels)
    family, p = spec.family, spec.parameter
    if family == "crop":
        return _crop_random(pixels, derive_seed(spec.seed, "crop", p))
    if family == "flip":
        return mirror_horizontal(pixels)
    if family == "brightness_add":
        return _clip_u8(pixels.astype(np.int16) + int(p))
    if family == "brightness_mul":
        return _clip_u8(np.rint(pixels.astype(np.float64) * float(p)))
    if family == "blur":
        return _blur(pixels, float(p))
    if family == "sharpen":
        return _sharpen(pixels, float(p))
    if family == "dropout":
        return _dropout(pixels, float(p), spec.seed)
    if family == "contrast":
        return _clip_u8(np.rint(128.0 + float(p) * (pixels.astype(np.float64) - 128.0)))
    if family == "scale":
        return _scale(pixels, float(p))
    if family == "translate":
        return _translate(pixels, float(p))
    if family == "rotate":
        return _rotate(pixels, float(p))
    if family == "shear":
        return _shear(pixels, float(p))
    raise ValueError(f"unsupported transform family {family!r}")


def derived_image_id(parent_id: str, spec: TransformSpec) -> str:
    return f"{parent_id}#{spec.family}={spec.parameter_text}"


def _augment_entry(entry: ManifestEntry, plan: list[TransformSpec],
                   output_directory: str, seed: int) -> list[ManifestEntry]:
    pixels = load_image(entry.path)
    out_dir = Path(output_directory)
    derived = []
    for spec in plan:
        if spec.family in STOCHASTIC_FAMILIES:
            spec_seed = derive_seed(seed, "augment", entry.image_id, spec.family,
                                    spec.parameter_text)
            spec = TransformSpec(spec.family, spec.parameter, spec_seed)
        result = apply_transform(pixels, spec)
        new_id = derived_image_id(entry.image_id, spec)
        filename = new_id.replace("/", "_") + ".png"
        path = out_dir / filename
        save_image(result, path)
        derived.append(ManifestEntry(new_id, str(path), entry.subject, entry.dataset_name,
                                     entry.side, "train", result.shape[1], result.shape[0]))
    return derived


def augment_dataset(
    manifest: DatasetManifest,
    config: AugmentConfig,
    output_directory: str | Path,
    seed: int = DEFAULT_SEED,
    aligned_mode: bool = False,
    jobs: int = 1,
) -> DatasetManifest:
    """Expand the train split by the full plan and write the images as PNG.

    Only train images are augmented. The returned manifest keeps every
    original entry and appends one derived entry per (train image, spec),
    sorted by image_id so the result is independent of worker scheduling.
    """
    out_dir = Path(output_directory)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"output directory not writable: {out_dir} ({exc})") from exc

    plan = plan_augmentations(config, aligned_mode)
    train_entries = manifest.split_entries("train")
    derived: list[ManifestEntry] = []
    if jobs > 1 and len(train_entries) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_augment_entry, e, plan, str(out_dir), seed)
                       for e in train_entries]
            for future in futures:
                derived.extend(future.result())
    else:
        for entry in train_entries:
            derived.extend(_augment_entry(entry, plan, str(out_dir), seed))
    derived.sort(key=lambda e: e.image_id)
    return DatasetManifest(manifest.entries + tuple(derived))
