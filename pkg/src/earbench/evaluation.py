"""Rank-based accuracy, quality-stratified error analysis, dataset
statistics, and the dataset-identification bias experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from earbench.common import DEFAULT_SEED, DataError
from earbench.images import load_image, mean_intensity, to_grayscale
from earbench.lbp import Gallery, LbpConfig, classify, extract_features
from earbench.manifest import DatasetManifest, ManifestEntry, SplitRatios, split_manifest
from earbench.fusion import ScoreMatrix

STRATIFY_KEYS = ("aspect_ratio", "mean_intensity", "resolution")


@dataclass(frozen=True)
class BinSpec:
    """Half-open bins [edge_i, edge_{i+1}); open_ended appends [last, inf).

    Values outside the edges are counted in the nearest terminal bin so a
    histogram always totals the number of samples.
    """

    edges: tuple[float, ...]
    open_ended: bool = False

    def __post_init__(self) -> None:
        if len(self.edges) < 2:
            raise ValueError("bins need at least two edges")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1 + (1 if self.open_ended else 0)

    def assign(self, value: float) -> int:
        index = int(np.searchsorted(self.edges, value, side="right")) - 1
        return int(np.clip(index, 0, self.n_bins - 1))

    def labels(self) -> list[str]:
        labels = [f"[{lo:g},{hi:g})" for lo, hi in zip(self.edges, self.edges[1:])]
        if self.open_ended:
            labels.append(f"[{self.edges[-1]:g},inf)")
        return labels


def default_aspect_bins() -> BinSpec:
    return BinSpec((0.0, 0.5, 1.0, 1.5, 2.0, 2.5), open_ended=True)


def default_intensity_bins() -> BinSpec:
    return BinSpec(tuple(float(v) for v in range(0, 257, 32)))


def default_resolution_bins() -> BinSpec:
    return BinSpec((0.0, 1e2, 1e3, 1e4, 1e5, 1e6), open_ended=True)


def default_bins_for(key: str) -> BinSpec:
    if key == "aspect_ratio":
        return default_aspect_bins()
    if key == "mean_intensity":
        return default_intensity_bins()
    if key == "resolution":
        return default_resolution_bins()
    raise ValueError(f"unknown stratification key {key!r}")


@dataclass
class EvaluationReport:
    """CMC accuracies plus optional stratified errors and histograms.

    cmc[0] is the rank-1 accuracy; at_rank uses 1-based ranks.
    """

    rank1: float
    cmc: np.ndarray
    per_bin_error: dict[str, dict[str, tuple[int, float | None]]] = field(default_factory=dict)
    histograms: dict[str, tuple[BinSpec, np.ndarray]] = field(default_factory=dict)

    def at_rank(self, rank: int) -> float:
        if not 1 <= rank <= len(self.cmc):
            raise ValueError(f"rank must be in [1, {len(self.cmc)}]")
        return float(self.cmc[rank - 1])


def _sample_value(entry: ManifestEntry, key: str) -> float:
    if key == "aspect_ratio":
        return entry.aspect_ratio
    if key == "resolution":
        return float(entry.resolution)
    if key == "mean_intensity":
        return mean_intensity(load_image(entry.path))
    raise ValueError(f"unknown stratification key {key!r}")


def true_class_ranks(scores: ScoreMatrix, truth: Mapping[str, str]) -> np.ndarray:
    """1-based rank of each sample's true class; score ties resolve in
    ascending class-label order."""
    canon = scores.canonical()
    label_index = {label: i for i, label in enumerate(canon.class_labels)}
    ranks = np.zeros(canon.n_samples, dtype=np.int64)
    for j, sample_id in enumerate(canon.sample_ids):
        if sample_id not in truth:
            raise DataError(f"sample {sample_id!r} missing from truth")
        true_label = truth[sample_id]
        if true_label not in label_index:
            raise DataError(
                f"true class {true_label!r} of sample {sample_id!r} is not a score column"
            )
        t = label_index[true_label]
        row = canon.rows[j]
        stronger = int((row > row[t]).sum())
        tied_before = int((row[:t] == row[t]).sum())
        ranks[j] = 1 + stronger + tied_before
    return ranks


def rank_accuracy(scores: ScoreMatrix, truth: Mapping[str, str],
                  max_rank: int | None = None) -> EvaluationReport:
    """Cumulative match characteristic up to max_rank (defaults to M)."""
    if max_rank is None:
        max_rank = scores.n_classes
    if not 1 <= max_rank <= scores.n_classes:
        raise ValueError(f"max_rank must be in [1, {scores.n_classes}]")
    ranks = true_class_ranks(scores, truth)
    cmc = np.array([(ranks <= r).mean() for r in range(1, max_rank + 1)])
    return EvaluationReport(rank1=float(cmc[0]), cmc=cmc)


def rank1_correctness(scores: ScoreMatrix, truth: Mapping[str, str]) -> dict[str, bool]:
    """Per-sample rank-1 hit indicator, consistent with the CMC tie rule."""
    canon = scores.canonical()
    ranks = true_class_ranks(canon, truth)
    return {sid: bool(r == 1) for sid, r in zip(canon.sample_ids, ranks)}


def stratify(
    manifest: DatasetManifest,
    per_sample_correct: Mapping[str, bool],
    key: str,
    bins: BinSpec | None = None,
) -> dict[str, tuple[int, float | None]]:
    """Partition evaluated samples into bins of the key and report error rates.

    Every sample lands in exactly one bin. Empty bins keep count 0 with a
    None error rate (never 0, which would fake a perfect bin).
    """
    if key not in STRATIFY_KEYS:
        raise ValueError(f"key must be one of {STRATIFY_KEYS}, got {key!r}")
    if bins is None:
        bins = default_bins_for(key)
    counts = np.zeros(bins.n_bins, dtype=np.int64)
    errors = np.zeros(bins.n_bins, dtype=np.int64)
    for sample_id, correct in per_sample_correct.items():
        entry = manifest.by_id(sample_id)
        index = bins.assign(_sample_value(entry, key))
        counts[index] += 1
        if not correct:
            errors[index] += 1
    result: dict[str, tuple[int, float | None]] = {}
    for label, count, wrong in zip(bins.labels(), counts, errors):
        rate = (int(wrong) / int(count)) if count else None
        result[label] = (int(count), rate)
    return result


def distribution_histogram(manifest: DatasetManifest, key: str,
                           bins: BinSpec | None = None) -> tuple[BinSpec, np.ndarray]:
    """Counts of all manifest entries per bin of the key; totals len(manifest)."""
    if key not in STRATIFY_KEYS:
        raise ValueError(f"key must be one of {STRATIFY_KEYS}, got {key!r}")
    if bins is None:
        bins = default_bins_for(key)
    counts = np.zeros(bins.n_bins, dtype=np.int64)
    for entry in manifest:
        counts[bins.assign(_sample_value(entry, key))] += 1
    return bins, counts


def _intensity_histogram(pixels: np.ndarray, bins: int = 16) -> np.ndarray:
    gray = to_grayscale(pixels)
    hist = np.bincount(gray.ravel() >> 4, minlength=bins).astype(np.float64)
    return hist / hist.sum()


def lbp_gallery_scorer(config: LbpConfig | None = None,
                       include_intensity: bool = True) -> Callable:
    """Built-in scorer for the bias experiment.

    Pure LBP histograms are invariant to global brightness, which would make
    datasets that differ only in exposure indistinguishable, so the default
    appends a 16-bin intensity histogram to each feature vector.
    """
    cfg = config or LbpConfig()

    def featurize(pixels: np.ndarray) -> np.ndarray:
        feature = extract_features(pixels, cfg)
        if include_intensity:
            feature = np.concatenate([feature, _intensity_histogram(pixels)])
        return feature

    def scorer(train: Sequence[tuple[str, np.ndarray]],
               probes: Sequence[np.ndarray]) -> list[str]:
        features = np.stack([featurize(pixels) for _, pixels in train])
        gallery = Gallery.fit(features, [label for label, _ in train])
        predictions = []
        for pixels in probes:
            probabilities = classify(gallery, featurize(pixels))
            predictions.append(gallery.classes[int(np.argmax(probabilities))])
        return predictions

    return scorer


@dataclass(frozen=True)
class BiasResult:
    dataset_names: tuple[str, ...]
    accuracy: float
    confusion: np.ndarray  # rows true dataset, columns predicted
    n_train: int
    n_test: int


def bias_experiment(
    manifests: Sequence[DatasetManifest],
    scorer: Callable | None = None,
    split_seed: int = DEFAULT_SEED,
    train_fraction: float = 0.6,
) -> BiasResult:
    """Can a classifier tell which dataset an image came from?

    Every image is relabeled with its dataset name, each dataset is split
    into train/test, and the scorer (the built-in gallery scorer unless
    given) is fit on the train portions and judged on the test portions.
    """
    entries: list[ManifestEntry] = []
    for manifest in manifests:
        for entry in manifest:
            entries.append(replace(
                entry,
                image_id=f"{entry.dataset_name}/{entry.image_id}",
                subject=entry.dataset_name,
                split="unassigned",
            ))
    names = tuple(sorted({e.subject for e in entries}))
    if len(names) < 2:
        raise ValueError("bias experiment needs at least two distinct dataset names")
    for name in names:
        if sum(e.subject == name for e in entries) < 2:
            raise ValueError(f"dataset {name!r} has fewer than 2 images")

    ratios = SplitRatios(train_fraction, 0.0, round(1.0 - train_fraction, 12))
    combined = split_manifest(DatasetManifest(entries), ratios, split_seed)
    train_entries = combined.split_entries("train")
    test_entries = combined.split_entries("test")
    if not test_entries:
        raise ValueError("bias experiment split produced no test images")

    if scorer is None:
        scorer = lbp_gallery_scorer()
    train_pairs = [(e.subject, load_image(e.path)) for e in train_entries]
    probes = [load_image(e.path) for e in test_entries]
    predictions = scorer(train_pairs, probes)
    if len(predictions) != len(test_entries):
        raise ValueError("scorer returned a prediction count different from the probe count")

    index = {name: i for i, name in enumerate(names)}
    confusion = np.zeros((len(names), len(names)), dtype=np.int64)
    for entry, predicted in zip(test_entries, predictions):
        if predicted not in index:
            raise ValueError(f"scorer predicted unknown dataset {predicted!r}")
        confusion[index[entry.subject], index[predicted]] += 1
    accuracy = float(np.trace(confusion) / confusion.sum())
    return BiasResult(names, accuracy, confusion, len(train_entries), len(test_entries))
