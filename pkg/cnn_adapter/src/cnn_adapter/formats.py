"""Readers/writers for the toolkit file formats this adapter speaks.

The adapter talks to the main toolkit purely through its files: it reads
"#manifest v1" manifests and emits "#scores v1" score matrices, so either
side can be swapped out independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MANIFEST_HEADER = "#manifest v1"
SCORES_HEADER_PREFIX = "#scores v1 model="


class FormatError(Exception):
    """A file does not follow the expected toolkit format."""


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str
    subject: str
    dataset_name: str
    side: str
    split: str
    width: int
    height: int


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MANIFEST_HEADER):
        raise FormatError(f"{path}: missing '{MANIFEST_HEADER}' header")
    entries = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 tab-separated fields")
        entry = ManifestEntry(fields[0], fields[1], fields[2], fields[3], fields[4],
                              fields[5], int(fields[6]), int(fields[7]))
        if entry.image_id in seen:
            raise FormatError(f"{path}:{lineno}: duplicate image_id {entry.image_id!r}")
        seen.add(entry.image_id)
        entries.append(entry)
    if not entries:
        raise FormatError(f"{path}: manifest holds no entries")
    return entries


def write_scores(path: str | Path, model_name: str, class_labels: list[str],
                 sample_ids: list[str], rows: np.ndarray) -> None:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape != (len(sample_ids), len(class_labels)):
        raise ValueError("rows shape must be (samples, classes)")
    sums = rows.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-6 or (rows < 0).any():
        raise ValueError("score rows must be nonnegative and sum to 1 within 1e-6")
    lines = [f"{SCORES_HEADER_PREFIX}{model_name}", "\t".join(class_labels)]
    for sample_id, row in zip(sample_ids, rows):
        lines.append(sample_id + "\t" + "\t".join(format(v, ".12g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
