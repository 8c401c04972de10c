"""Export per-probe softmax scores in the toolkit's score-matrix format."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from cnn_adapter.data import CropDataset
from cnn_adapter.formats import read_manifest, write_scores


def export_scores(artifact: dict, manifest_path: str | Path, out_path: str | Path,
                  split: str = "test", model_name: str | None = None,
                  batch_size: int = 32) -> int:
    """Score one manifest split with a fine-tuned model and write the file.

    Preprocessing is the inference contract: resize to 256 then a single
    center crop. Softmax is applied at export time so rows always sum to 1.
    The model's class list must equal the manifest's subject set; the error
    lists extra and missing labels otherwise. Returns the probe count.
    """
    from cnn_adapter.train import model_from_artifact

    entries = read_manifest(manifest_path)
    probes = [e for e in entries if e.split == split]
    if not probes:
        raise ValueError(f"manifest has no entries in split {split!r}")

    classes = list(artifact["classes"])
    manifest_subjects = sorted({e.subject for e in entries})
    if manifest_subjects != sorted(classes):
        extra = sorted(set(classes) - set(manifest_subjects))
        missing = sorted(set(manifest_subjects) - set(classes))
        raise ValueError(
            f"model classes do not match manifest subjects "
            f"(extra in model: {extra}, missing from model: {missing})"
        )

    model = model_from_artifact(artifact)
    dataset = CropDataset(probes, classes, artifact["crop_size"], "test")
    rows = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = [dataset[i][0] for i in range(start, min(start + batch_size,
                                                             len(dataset)))]
            logits = model(torch.stack(batch))
            rows.append(torch.softmax(logits, dim=1).double().numpy())
    matrix = np.concatenate(rows, axis=0)
    matrix /= matrix.sum(axis=1, keepdims=True)  # pin float64 row sums to 1

    write_scores(out_path, model_name or artifact["architecture"], classes,
                 [e.image_id for e in probes], matrix)
    return len(probes)
