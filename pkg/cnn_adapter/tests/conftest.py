import numpy as np
import pytest

from earbench.manifest import SplitRatios, build_manifest, split_manifest
from earbench.toydata import generate_toy_dataset


@pytest.fixture(scope="session")
def toy_split_manifest(tmp_path_factory):
    """5-subject toy dataset with a 60/40 split, written in the manifest format."""
    root = tmp_path_factory.mktemp("toy")
    generate_toy_dataset(root / "data", subjects=5, images_per_subject=20, size=64)
    manifest = build_manifest(root / "data", "toy")
    manifest = split_manifest(manifest, SplitRatios(0.6, 0.0, 0.4), seed=42)
    path = root / "manifest.tsv"
    manifest.write(path)
    return path
