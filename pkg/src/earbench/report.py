"""Delimited report output: key=value summaries and per-histogram CSV files."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from earbench.evaluation import BinSpec


def format_value(value: object) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    if value is None:
        return "null"
    return str(value)


def write_key_values(path: str | Path, items: dict[str, object]) -> None:
    lines = [f"{key}={format_value(value)}" for key, value in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_csv(path: str | Path, header: list[str], rows: list[list[object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_cmc_csv(path: str | Path, cmc: np.ndarray) -> None:
    write_csv(path, ["rank", "cmc"], [[r + 1, float(v)] for r, v in enumerate(cmc)])


def write_histogram_csv(path: str | Path, bins: BinSpec, counts: np.ndarray) -> None:
    rows = [[label, int(count)] for label, count in zip(bins.labels(), counts)]
    write_csv(path, ["bin", "count"], rows)


def write_strata_csv(path: str | Path, strata: dict[str, tuple[int, float | None]]) -> None:
    rows = [[label, count, rate] for label, (count, rate) in strata.items()]
    write_csv(path, ["bin", "count", "error_rate"], rows)


def write_confusion_csv(path: str | Path, names: tuple[str, ...], confusion: np.ndarray) -> None:
    rows = [[name, *confusion[i].tolist()] for i, name in enumerate(names)]
    write_csv(path, ["true\\predicted", *names], rows)
