"""Local-binary-pattern texture features and a chi-square nearest-neighbor
scorer that emits probability rows compatible with score fusion.

Code convention: for each interior pixel, the eight neighbors are visited
clockwise starting at the top-left corner; bit i of the code is set iff
neighbor i >= center. A flat region therefore codes to 255 and a strict
local maximum to 0.

Uniform binning keeps one histogram bin per code with at most two 0/1
transitions around the ring (58 codes, in ascending numeric order) plus a
single catch-all bin, 59 bins total.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from earbench.common import DataError
from earbench.images import resize_bilinear, to_grayscale, validate_image

UNIFORM_BINS = 59

FEATURE_CACHE_MAGIC = b"LBPF"
FEATURE_CACHE_VERSION = 1


def _ring_transitions(code: int) -> int:
    bits = [(code >> i) & 1 for i in range(8)]
    return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))


UNIFORM_CODES = tuple(code for code in range(256) if _ring_transitions(code) <= 2)

_BIN_OF_CODE = np.full(256, UNIFORM_BINS - 1, dtype=np.int64)
for _bin, _code in enumerate(UNIFORM_CODES):
    _BIN_OF_CODE[_code] = _bin


def uniform_bin_of(code: int) -> int:
    """Histogram bin index of an LBP code under uniform binning."""
    if not 0 <= code <= 255:
        raise ValueError("LBP codes lie in [0, 255]")
    return int(_BIN_OF_CODE[code])


@dataclass(frozen=True)
class LbpConfig:
    radius: int = 1
    neighbors: int = 8
    grid_rows: int = 8
    grid_cols: int = 8
    uniform: bool = True
    working_size: int = 128

    def __post_init__(self) -> None:
        if (self.radius, self.neighbors) != (1, 8):
            raise ValueError("only the 3x3 operator (radius=1, neighbors=8) is implemented")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must have at least one cell")
        if self.working_size < 3:
            raise ValueError("working size must allow a 3x3 window")

    @property
    def bins(self) -> int:
        return UNIFORM_BINS if self.uniform else 256

    @property
    def feature_length(self) -> int:
        return self.grid_rows * self.grid_cols * self.bins


def code_map(gray: np.ndarray) -> np.ndarray:
    """LBP code for every interior pixel of a grayscale image."""
    if gray.ndim != 2 or gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError("code map needs a grayscale image of at least 3x3")
    g = gray.astype(np.int16)
    center = g[1:-1, 1:-1]
    neighbors = (
        g[:-2, :-2],   # top-left
        g[:-2, 1:-1],  # top
        g[:-2, 2:],    # top-right
        g[1:-1, 2:],   # right
        g[2:, 2:],     # bottom-right
        g[2:, 1:-1],   # bottom
        g[2:, :-2],    # bottom-left
        g[1:-1, :-2],  # left
    )
    codes = np.zeros(center.shape, dtype=np.uint8)
    for bit, neighbor in enumerate(neighbors):
        codes |= (neighbor >= center).astype(np.uint8) << bit
    return codes


def lbp_code(window: np.ndarray) -> int:
    """Code of a single 3x3 window under the stated neighbor/bit convention."""
    window = np.asarray(window)
    if window.shape != (3, 3):
        raise ValueError("window must be 3x3")
    return int(code_map(window.astype(np.uint8))[0, 0])


def extract_features(pixels: np.ndarray, config: LbpConfig = LbpConfig()) -> np.ndarray:
    """Concatenated per-cell LBP histograms, each L1-normalized.

    The image is grayscaled, resized to the working size, coded, and the
    code map is partitioned into grid_rows x grid_cols cells row-major.
    Cells that contain no pixels yield all-zero histograms.
    """
    validate_image(pixels)
    gray = to_grayscale(pixels)
    gray = resize_bilinear(gray, config.working_size, config.working_size)
    codes = code_map(gray)
    values = _BIN_OF_CODE[codes] if config.uniform else codes.astype(np.int64)
    height, width = values.shape
    bins = config.bins
    feature = np.zeros(config.feature_length, dtype=np.float64)
    cell = 0
    for row in range(config.grid_rows):
        top = row * height // config.grid_rows
        bottom = (row + 1) * height // config.grid_rows
        for col in range(config.grid_cols):
            left = col * width // config.grid_cols
            right = (col + 1) * width // config.grid_cols
            hist = np.bincount(values[top:bottom, left:right].ravel(),
                               minlength=bins).astype(np.float64)
            total = hist.sum()
            if total > 0:
                hist /= total
            feature[cell * bins : (cell + 1) * bins] = hist
            cell += 1
    return feature


def chi_square_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of (a_i - b_i)^2 / (a_i + b_i) over bins with positive mass."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    denom = a + b
    num = (a - b) ** 2
    out = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(out.sum())


def _chi_square_to_rows(probe: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    denom = matrix + probe
    num = (matrix - probe) ** 2
    ratios = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return ratios.sum(axis=1)


def _median_pair_distance(features: np.ndarray, max_vectors: int = 256) -> float:
    n = features.shape[0]
    if n < 2:
        return 1.0
    if n > max_vectors:
        idx = np.unique(np.linspace(0, n - 1, max_vectors).astype(np.int64))
        features = features[idx]
        n = features.shape[0]
    distances = []
    for i in range(n - 1):
        distances.append(_chi_square_to_rows(features[i], features[i + 1 :]))
    median = float(np.median(np.concatenate(distances)))
    return median if median > 0 else 1.0


def probabilities_from_distances(distances: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax over negative distances: exp(-d/T) normalized to sum 1."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    z = -np.asarray(distances, dtype=np.float64) / temperature
    z -= z.max()
    p = np.exp(z)
    return p / p.sum()


@dataclass(frozen=True)
class Gallery:
    """Immutable labeled feature store for nearest-neighbor scoring.

    The default temperature is the median chi-square distance between
    gallery vectors (computed once over a deterministic subsample when the
    gallery is large), which keeps probabilities scale-robust.
    """

    features: np.ndarray
    labels: tuple[str, ...]
    classes: tuple[str, ...]
    temperature: float
    _class_indices: tuple[np.ndarray, ...] = field(repr=False, default=())

    @classmethod
    def fit(cls, features: np.ndarray, labels: list[str] | tuple[str, ...],
            temperature: float | None = None) -> "Gallery":
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ValueError("gallery needs a non-empty 2-D feature matrix")
        if features.shape[0] != len(labels):
            raise ValueError("one label per feature vector required")
        classes = tuple(sorted(set(labels)))
        label_array = np.asarray(labels)
        class_indices = tuple(np.flatnonzero(label_array == c) for c in classes)
        if temperature is None:
            temperature = _median_pair_distance(features)
        if temperature <= 0:
            raise ValueError("temperature must be > 0")
        return cls(features, tuple(labels), classes, float(temperature), class_indices)


def class_distances(gallery: Gallery, probe: np.ndarray) -> np.ndarray:
    """Minimum chi-square distance from the probe to each class, class-sorted."""
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (gallery.features.shape[1],):
        raise ValueError("probe length does not match gallery features")
    distances = _chi_square_to_rows(probe, gallery.features)
    return np.array([distances[idx].min() for idx in gallery._class_indices])


def classify(gallery: Gallery, probe: np.ndarray, temperature: float | None = None) -> np.ndarray:
    """Per-class probabilities over gallery.classes.

    The argmax always equals the nearest-neighbor class; equal minimal
    distances resolve to the lowest class in sorted label order.
    """
    if gallery.features.shape[0] == 0:
        raise ValueError("empty gallery")
    t = gallery.temperature if temperature is None else float(temperature)
    return probabilities_from_distances(class_distances(gallery, probe), t)


def write_feature_cache(path: str | Path, ids: list[str], features: np.ndarray) -> None:
    """Binary cache: magic "LBPF", a version byte, then one record per image.

    Record layout (little-endian): u32 id byte length, UTF-8 id bytes,
    u32 value count, then the values as float32.
    """
    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[0] != len(ids):
        raise ValueError("one feature row per id required")
    if len(set(ids)) != len(ids):
        raise ValueError("feature cache ids must be unique")
    with open(path, "wb") as handle:
        handle.write(FEATURE_CACHE_MAGIC)
        handle.write(bytes([FEATURE_CACHE_VERSION]))
        for image_id, row in zip(ids, features):
            encoded = image_id.encode("utf-8")
            handle.write(struct.pack("<I", len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack("<I", row.shape[0]))
            handle.write(row.astype("<f4").tobytes())


def read_feature_cache(path: str | Path) -> tuple[list[str], np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != FEATURE_CACHE_MAGIC:
        raise DataError(f"{path}: not a feature cache (bad magic)")
    if len(blob) < 5 or blob[4] != FEATURE_CACHE_VERSION:
        raise DataError(f"{path}: unsupported feature cache version")
    offset = 5
    ids: list[str] = []
    rows: list[np.ndarray] = []
    while offset < len(blob):
        if offset + 4 > len(blob):
            raise DataError(f"{path}: truncated record header")
        (id_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        image_id = blob[offset : offset + id_len].decode("utf-8")
        offset += id_len
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        end = offset + 4 * count
        if end > len(blob):
            raise DataError(f"{path}: truncated feature data for {image_id!r}")
        rows.append(np.frombuffer(blob[offset:end], dtype="<f4").astype(np.float64))
        ids.append(image_id)
        offset = end
    if not ids:
        raise DataError(f"{path}: feature cache holds no records")
    lengths = {row.shape[0] for row in rows}
    if len(lengths) != 1:
        raise DataError(f"{path}: inconsistent feature lengths {sorted(lengths)}")
    return ids, np.stack(rows)
