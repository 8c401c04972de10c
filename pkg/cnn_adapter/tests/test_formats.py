"""File-format compatibility with the main toolkit, in both directions."""

import numpy as np
import pytest

import earbench.fusion as primary_fusion
from cnn_adapter.formats import FormatError, read_manifest, write_scores


class TestManifestReader:
    def test_reads_primary_manifest(self, toy_split_manifest):
        entries = read_manifest(toy_split_manifest)
        assert len(entries) == 100
        assert {e.split for e in entries} == {"train", "test"}
        assert len({e.subject for e in entries}) == 5

    def test_rejects_missing_header(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("id\tp\ts\td\tleft\ttrain\t4\t4\n")
        with pytest.raises(FormatError, match="header"):
            read_manifest(path)

    def test_rejects_duplicate_ids(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("#manifest v1\n" + "a\tp\ts\td\tleft\ttrain\t4\t4\n" * 2)
        with pytest.raises(FormatError, match="duplicate"):
            read_manifest(path)


class TestScoresWriter:
    def test_primary_reader_accepts_output(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = rng.dirichlet(np.ones(4), size=6)
        path = tmp_path / "scores.tsv"
        write_scores(path, "adapter", [f"c{i}" for i in range(4)],
                     [f"s{i}" for i in range(6)], rows)
        matrix = primary_fusion.read_scores(path)
        assert matrix.model_name == "adapter"
        assert matrix.n_samples == 6
        np.testing.assert_allclose(matrix.rows.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(matrix.rows, rows, atol=1e-9)

    def test_rejects_off_simplex_rows(self, tmp_path):
        with pytest.raises(ValueError, match="sum to 1"):
            write_scores(tmp_path / "x.tsv", "m", ["a", "b"], ["s0"],
                         np.array([[0.9, 0.3]]))
