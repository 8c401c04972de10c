"""Dataset manifests: construction, file format, subject-stratified splits.

Manifest file format (UTF-8, line oriented):
    line 1:  "#manifest v1"
    then one record per line, tab-separated fields in the order
    image_id, path, subject, dataset_name, side, split, width, height.

Side-override file: tab-separated "image_id<TAB>side" lines, "#" comments
allowed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from earbench.common import DataError, derive_seed
from earbench.images import image_size, is_decodable

log = logging.getLogger(__name__)

MANIFEST_HEADER = "#manifest v1"

SIDE_VALUES = ("left", "right", "unknown")
SPLIT_VALUES = ("train", "val", "test", "unassigned")

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    subject: str
    dataset_name: str
    side: str = "unknown"
    split: str = "unassigned"
    width: int = 0
    height: int = 0

    def __post_init__(self) -> None:
        if self.side not in SIDE_VALUES:
            raise ValueError(f"side must be one of {SIDE_VALUES}, got {self.side!r}")
        if self.split not in SPLIT_VALUES:
            raise ValueError(f"split must be one of {SPLIT_VALUES}, got {self.split!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"{self.image_id}: width and height must be >= 1")

    @property
    def aspect_ratio(self) -> float:
        """Height over width; strictly positive for any valid entry."""
        return self.height / self.width

    @property
    def resolution(self) -> int:
        """Total pixel count."""
        return self.width * self.height


class DatasetManifest:
    """Immutable ordered collection of entries with unique image ids."""

    def __init__(self, entries: Iterable[ManifestEntry]):
        self._entries = tuple(entries)
        seen: set[str] = set()
        for entry in self._entries:
            if entry.image_id in seen:
                raise DataError(f"duplicate image_id {entry.image_id!r} in manifest")
            seen.add(entry.image_id)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self._entries)

    def __getitem__(self, index: int) -> ManifestEntry:
        return self._entries[index]

    @property
    def entries(self) -> tuple[ManifestEntry, ...]:
        return self._entries

    def by_id(self, image_id: str) -> ManifestEntry:
        try:
            return self._index()[image_id]
        except KeyError:
            raise DataError(f"image_id {image_id!r} not present in manifest") from None

    def _index(self) -> dict[str, ManifestEntry]:
        if not hasattr(self, "_by_id"):
            object.__setattr__(self, "_by_id", {e.image_id: e for e in self._entries})
        return self._by_id  # type: ignore[attr-defined]

    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({e.subject for e in self._entries}))

    def dataset_names(self) -> tuple[str, ...]:
        return tuple(sorted({e.dataset_name for e in self._entries}))

    def split_entries(self, split: str) -> tuple[ManifestEntry, ...]:
        if split not in SPLIT_VALUES:
            raise ValueError(f"unknown split {split!r}")
        return tuple(e for e in self._entries if e.split == split)

    def write(self, path: str | Path) -> None:
        lines = [MANIFEST_HEADER]
        for e in self._entries:
            fields = (e.image_id, e.path, e.subject, e.dataset_name, e.side, e.split,
                      str(e.width), str(e.height))
            if any("\t" in f or "\n" in f for f in fields):
                raise ValueError(f"{e.image_id}: manifest fields may not contain tabs or newlines")
            lines.append("\t".join(fields))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "DatasetManifest":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.splitlines()
        if not lines or not lines[0].startswith(MANIFEST_HEADER):
            raise DataError(f"{path}: missing '{MANIFEST_HEADER}' header")
        entries = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 8:
                raise DataError(f"{path}:{lineno}: expected 8 tab-separated fields, got {len(fields)}")
            image_id, img_path, subject, dataset_name, side, split, width, height = fields
            try:
                entry = ManifestEntry(image_id, img_path, subject, dataset_name, side,
                                      split, int(width), int(height))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            entries.append(entry)
        return cls(entries)


def _infer_side(stem: str) -> str:
    lowered = stem.lower()
    if lowered.endswith(("_l", "_left")):
        return "left"
    if lowered.endswith(("_r", "_right")):
        return "right"
    return "unknown"


def read_side_overrides(path: str | Path) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected 'image_id<TAB>side'")
        image_id, side = fields
        if side not in SIDE_VALUES:
            raise DataError(f"{path}:{lineno}: side must be one of {SIDE_VALUES}, got {side!r}")
        overrides[image_id] = side
    return overrides


def build_manifest(
    root_directory: str | Path,
    dataset_name: str,
    layout: str = "subdirs",
    labels_path: str | Path | None = None,
    side_overrides: dict[str, str] | None = None,
) -> DatasetManifest:
    """Scan a directory tree into a manifest.

    layout "subdirs": every direct subdirectory of the root is a subject and
    its image files are that subject's samples. layout "labelfile": image
    files live anywhere under the root and labels_path maps each image's
    root-relative path to a subject.

    Undecodable images are skipped with a warning; an unreadable root or a
    scan yielding no images is fatal.
    """
    root = Path(root_directory)
    if not root.is_dir():
        raise DataError(f"unreadable directory: {root}")

    if layout == "subdirs":
        candidates = [
            (p, p.parent.name)
            for sub in sorted(root.iterdir()) if sub.is_dir()
            for p in sorted(sub.iterdir())
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        ]
    elif layout == "labelfile":
        if labels_path is None:
            raise ValueError("layout 'labelfile' requires labels_path")
        labels: dict[str, str] = {}
        for lineno, line in enumerate(Path(labels_path).read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split("\t")
            if len(fields) != 2:
                raise DataError(f"{labels_path}:{lineno}: expected 'relative_path<TAB>subject'")
            labels[fields[0]] = fields[1]
        candidates = []
        for rel, subject in sorted(labels.items()):
            p = root / rel
            if not p.is_file():
                raise DataError(f"{labels_path}: listed file missing: {p}")
            candidates.append((p, subject))
    else:
        raise ValueError(f"unknown layout {layout!r}")

    entries = []
    skipped = 0
    for path, subject in candidates:
        if not is_decodable(path):
            skipped += 1
            log.warning("skipping undecodable image: %s", path)
            continue
        width, height = image_size(path)
        rel = path.relative_to(root).as_posix()
        image_id = rel.rsplit(".", 1)[0]
        side = _infer_side(path.stem)
        if side_overrides and image_id in side_overrides:
            side = side_overrides[image_id]
        entries.append(ManifestEntry(image_id, str(path), subject, dataset_name,
                                     side, "unassigned", width, height))
    if not entries:
        raise DataError(f"no images found under {root}")
    entries.sort(key=lambda e: e.image_id)
    if skipped:
        log.warning("skipped %d undecodable image(s) under %s", skipped, root)
    return DatasetManifest(entries)


@dataclass(frozen=True)
class SplitRatios:
    train_fraction: float
    val_fraction: float
    test_fraction: float

    def __post_init__(self) -> None:
        for name, frac in (("train", self.train_fraction), ("val", self.val_fraction),
                           ("test", self.test_fraction)):
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"{name} fraction must be in [0, 1], got {frac}")
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1.0, got {total}")

    @classmethod
    def parse(cls, text: str) -> "SplitRatios":
        parts = text.split(",")
        if len(parts) != 3:
            raise ValueError("ratios must be 'train,val,test'")
        return cls(*(float(p) for p in parts))


def _subject_counts(n: int, ratios: SplitRatios) -> tuple[int, int, int]:
    counts = {
        "train": int(n * ratios.train_fraction),
        "val": int(n * ratios.val_fraction),
        "test": int(n * ratios.test_fraction),
    }
    # Leftover images (at most two) go to train first, then test, then val,
    # so training is never starved on tiny subjects.
    remainder = n - sum(counts.values())
    for bucket in ("train", "test", "val")[:remainder]:
        counts[bucket] += 1
    return counts["train"], counts["val"], counts["test"]


def split_manifest(manifest: DatasetManifest, ratios: SplitRatios, seed: int) -> DatasetManifest:
    """Assign a split to every entry, stratified per subject.

    Each subject's images are shuffled with a subject-derived seed and dealt
    out as [train | val | test] with integer counts as close to the ratios
    as possible. Deterministic for a fixed seed regardless of input order.
    """
    by_subject: dict[str, list[ManifestEntry]] = {}
    for entry in manifest:
        by_subject.setdefault(entry.subject, []).append(entry)

    assignment: dict[str, str] = {}
    for subject in sorted(by_subject):
        group = sorted(by_subject[subject], key=lambda e: e.image_id)
        rng = np.random.default_rng(derive_seed(seed, "split", subject))
        order = rng.permutation(len(group))
        n_train, n_val, n_test = _subject_counts(len(group), ratios)
        for rank, idx in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            assignment[group[idx].image_id] = split

    return DatasetManifest(replace(e, split=assignment[e.image_id]) for e in manifest)
