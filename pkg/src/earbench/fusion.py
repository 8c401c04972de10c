"""Confidence-based max-rule fusion of per-model score matrices.

A score matrix holds one probability row per probe sample over a shared
class list. Five confidence formulas summarize how peaked a row is; with s
denoting the row sorted descending and M the class count:

    basic     c = s[0]
    d2s       c = s[0] - s[1]
    d2sr      c = 1 - s[1] / s[0]
    avg_diff  c = (1 / (M - 1)) * sum_{i=1..M-1} (s[0] - s[i])
    diff1     c = sum_{i=1..M-1} (s[i-1] - s[i]) / i

Max-rule fusion trusts, per sample, the model whose confidence is highest;
ties go to the model listed first.

Score file format (UTF-8):
    line 1: "#scores v1 model=<name>"
    line 2: tab-separated class labels
    then per sample: sample_id and M decimal floats, tab-separated.
Rows must be nonnegative and sum to 1 within 1e-6 or the reader rejects
the file, naming the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from earbench.common import DataError

CONFIDENCE_METHODS = ("basic", "d2s", "d2sr", "avg_diff", "diff1")

SCORES_HEADER_PREFIX = "#scores v1 model="

ROW_SUM_TOLERANCE = 1e-6


def normalize_method(name: str) -> str:
    method = name.replace("-", "_")
    if method not in CONFIDENCE_METHODS:
        raise ValueError(f"unknown confidence method {name!r}; choose from {CONFIDENCE_METHODS}")
    return method


def _validate_rows(rows: np.ndarray, context: str) -> None:
    if rows.ndim != 2:
        raise ValueError(f"{context}: rows must form an N x M matrix")
    if rows.shape[1] < 2:
        raise ValueError(f"{context}: need at least two classes")
    if (rows < 0).any():
        raise ValueError(f"{context}: scores must be nonnegative")
    sums = rows.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
    if bad.size:
        raise ValueError(
            f"{context}: row {int(bad[0])} sums to {sums[bad[0]]:.9f}, expected 1 +/- {ROW_SUM_TOLERANCE}"
        )


@dataclass(frozen=True)
class ScoreMatrix:
    """One model's probability rows over a fixed class list."""

    model_name: str
    class_labels: tuple[str, ...]
    sample_ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=np.float64))
        if len(set(self.class_labels)) != len(self.class_labels):
            raise ValueError(f"{self.model_name}: class labels must be unique")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError(f"{self.model_name}: sample ids must be unique")
        if self.rows.shape != (len(self.sample_ids), len(self.class_labels)):
            raise ValueError(
                f"{self.model_name}: rows shape {self.rows.shape} does not match "
                f"{len(self.sample_ids)} samples x {len(self.class_labels)} classes"
            )
        _validate_rows(self.rows, self.model_name)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def canonical(self) -> "ScoreMatrix":
        """Columns sorted by class label, rows sorted by sample id."""
        col_order = np.argsort(np.asarray(self.class_labels))
        row_order = np.argsort(np.asarray(self.sample_ids))
        return ScoreMatrix(
            self.model_name,
            tuple(self.class_labels[i] for i in col_order),
            tuple(self.sample_ids[i] for i in row_order),
            self.rows[np.ix_(row_order, col_order)],
        )


def confidence(row: np.ndarray, method: str) -> float:
    """Confidence of one probability row; sorting happens internally."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] < 2:
        raise ValueError("confidence needs a 1-D row with at least two classes")
    _validate_rows(row[None, :], "confidence")
    return float(confidences(row[None, :], method)[0])


def confidences(rows: np.ndarray, method: str) -> np.ndarray:
    """Vectorized confidence over an N x M matrix of probability rows."""
    method = normalize_method(method)
    rows = np.asarray(rows, dtype=np.float64)
    s = -np.sort(-rows, axis=1)
    if method == "basic":
        return s[:, 0].copy()
    if method == "d2s":
        return s[:, 0] - s[:, 1]
    if method == "d2sr":
        if (s[:, 0] == 0).any():
            raise ValueError("d2sr undefined when the top score is 0")
        return 1.0 - s[:, 1] / s[:, 0]
    if method == "avg_diff":
        return (s[:, :1] - s[:, 1:]).mean(axis=1)
    # diff1
    steps = s[:, :-1] - s[:, 1:]
    return (steps / np.arange(1, s.shape[1])).sum(axis=1)


@dataclass(frozen=True)
class FusionDecision:
    sample_id: str
    chosen_model: str
    confidence: float
    predicted_class: str


def fuse_max(matrices: list[ScoreMatrix], method: str) -> list[FusionDecision]:
    """Per sample, keep the prediction of the most confident model.

    All matrices must agree on class labels and sample ids after canonical
    sorting; the first divergence is named in the error. Equal confidences
    resolve to the model listed first.
    """
    method = normalize_method(method)
    if len(matrices) < 2:
        raise ValueError("fusion needs at least two score matrices")
    names = [m.model_name for m in matrices]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate model names in fusion input: {names}")
    canon = [m.canonical() for m in matrices]
    reference = canon[0]
    for other in canon[1:]:
        for index, (a, b) in enumerate(zip(reference.class_labels, other.class_labels)):
            if a != b:
                raise DataError(
                    f"class labels differ between {reference.model_name!r} and "
                    f"{other.model_name!r} at position {index}: {a!r} vs {b!r}"
                )
        if reference.n_classes != other.n_classes:
            raise DataError(
                f"class count differs: {reference.model_name!r} has {reference.n_classes}, "
                f"{other.model_name!r} has {other.n_classes}"
            )
        for index, (a, b) in enumerate(zip(reference.sample_ids, other.sample_ids)):
            if a != b:
                raise DataError(
                    f"sample ids differ between {reference.model_name!r} and "
                    f"{other.model_name!r} at position {index}: {a!r} vs {b!r}"
                )
        if reference.n_samples != other.n_samples:
            raise DataError(
                f"sample count differs: {reference.model_name!r} has {reference.n_samples}, "
                f"{other.model_name!r} has {other.n_samples}"
            )

    all_conf = np.stack([confidences(m.rows, method) for m in canon])
    chosen = np.argmax(all_conf, axis=0)  # first maximum: input-list order wins ties
    decisions = []
    for j, sample_id in enumerate(reference.sample_ids):
        k = int(chosen[j])
        row = canon[k].rows[j]
        predicted = reference.class_labels[int(np.argmax(row))]
        decisions.append(FusionDecision(sample_id, canon[k].model_name,
                                        float(all_conf[k, j]), predicted))
    return decisions


def fused_accuracy(decisions: list[FusionDecision], truth: dict[str, str]) -> float:
    """Fraction of decisions whose predicted class matches the truth map."""
    if not decisions:
        raise ValueError("no decisions to score")
    correct = 0
    for decision in decisions:
        if decision.sample_id not in truth:
            raise DataError(f"sample {decision.sample_id!r} missing from truth")
        correct += decision.predicted_class == truth[decision.sample_id]
    return correct / len(decisions)


def write_scores(matrix: ScoreMatrix, path: str | Path) -> None:
    lines = [f"{SCORES_HEADER_PREFIX}{matrix.model_name}",
             "\t".join(matrix.class_labels)]
    for sample_id, row in zip(matrix.sample_ids, matrix.rows):
        lines.append(sample_id + "\t" + "\t".join(format(v, ".12g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scores(path: str | Path) -> ScoreMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(SCORES_HEADER_PREFIX):
        raise DataError(f"{path}: missing '{SCORES_HEADER_PREFIX}<name>' header")
    model_name = lines[0][len(SCORES_HEADER_PREFIX):].strip()
    if not model_name:
        raise DataError(f"{path}: empty model name in header")
    if len(lines) < 3:
        raise DataError(f"{path}: expected a label line and at least one sample row")
    labels = tuple(lines[1].split("\t"))
    sample_ids: list[str] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(labels) + 1:
            raise DataError(
                f"{path}:{lineno}: expected sample_id plus {len(labels)} scores, "
                f"got {len(fields)} fields"
            )
        try:
            values = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        total = sum(values)
        if abs(total - 1.0) > ROW_SUM_TOLERANCE:
            raise DataError(
                f"{path}:{lineno}: row sums to {total:.9f}, expected 1 +/- {ROW_SUM_TOLERANCE}"
            )
        if any(v < 0 for v in values):
            raise DataError(f"{path}:{lineno}: negative score")
        sample_ids.append(fields[0])
        rows.append(values)
    try:
        return ScoreMatrix(model_name, labels, tuple(sample_ids), np.array(rows))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_truth(path: str | Path) -> dict[str, str]:
    """Tab-separated "sample_id<TAB>class" lines; '#' comments allowed."""
    truth: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected 'sample_id<TAB>class'")
        if fields[0] in truth:
            raise DataError(f"{path}:{lineno}: duplicate sample id {fields[0]!r}")
        truth[fields[0]] = fields[1]
    if not truth:
        raise DataError(f"{path}: no truth records found")
    return truth


def write_truth(truth: dict[str, str], path: str | Path) -> None:
    lines = [f"{k}\t{v}" for k, v in sorted(truth.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_decisions(decisions: list[FusionDecision], path: str | Path) -> None:
    lines = ["#fusion v1", "sample_id\tchosen_model\tconfidence\tpredicted_class"]
    for d in decisions:
        lines.append(f"{d.sample_id}\t{d.chosen_model}\t{format(d.confidence, '.12g')}\t{d.predicted_class}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
