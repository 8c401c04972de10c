"""Command-line interface: one subcommand per pipeline stage plus a recipe
runner. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from earbench.common import DEFAULT_SEED, SEED_ENV_VAR, DataError, resolve_seed
from earbench import augment as aug
from earbench import evaluation as ev
from earbench import fusion
from earbench import lbp
from earbench import report
from earbench.images import align_side, load_image, save_image
from earbench.manifest import DatasetManifest, ManifestEntry, SplitRatios, \
    build_manifest, read_side_overrides, split_manifest

PIPELINE_COMMANDS = ("manifest", "split", "align", "augment", "extract", "classify",
                     "fuse", "evaluate", "stats", "bias")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_seed(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: ${SEED_ENV_VAR} or {DEFAULT_SEED})")


def build_parser() -> _Parser:
    parser = _Parser(prog="earbench",
                     description="Deterministic ear-recognition experiment toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("manifest", help="scan an image directory into a manifest file")
    p.add_argument("--root", required=True, help="dataset root directory")
    p.add_argument("--dataset-name", required=True, help="source dataset tag")
    p.add_argument("--layout", choices=("subdirs", "labelfile"), default="subdirs",
                   help="subject subdirectories, or a flat tree with a label file")
    p.add_argument("--labels", default=None, help="label file for --layout labelfile")
    p.add_argument("--side-overrides", default=None, help="image_id<TAB>side override file")
    p.add_argument("--out", required=True, help="output manifest path")
    p.set_defaults(func=_cmd_manifest)

    p = sub.add_parser("split", help="assign train/val/test splits, stratified by subject")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", required=True, help="train,val,test fractions, e.g. 0.6,0.0,0.4")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("align", help="mirror images so every ear faces the same side")
    p.add_argument("--manifest", required=True)
    p.add_argument("--target-side", choices=("left", "right"), required=True)
    p.add_argument("--out-dir", required=True, help="directory for aligned image copies")
    p.add_argument("--out", required=True, help="output manifest path")
    p.add_argument("--skip-unknown", action="store_true",
                   help="drop entries with unknown side instead of failing")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("augment", help="expand the train split over the transform grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True, help="directory for generated PNGs")
    p.add_argument("--out", required=True, help="output manifest path")
    p.add_argument("--augment-config", default=None, help="key=value config file")
    p.add_argument("--preset", choices=("full", "reduced"), default="full",
                   help="built-in grid preset when no config file is given")
    p.add_argument("--aligned", action="store_true",
                   help="aligned mode: omit flip specs from the plan")
    p.add_argument("--jobs", type=int, default=1, help="worker process cap")
    _add_seed(p)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("extract", help="compute LBP features into a cache file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output feature cache path")
    p.add_argument("--split", default=None,
                   help="comma list of splits to include (default: all entries)")
    p.add_argument("--working-size", type=int, default=128)
    p.add_argument("--grid-rows", type=int, default=8)
    p.add_argument("--grid-cols", type=int, default=8)
    p.add_argument("--jobs", type=int, default=1, help="worker process cap")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("classify", help="score probe features against a gallery")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True, help="feature cache from 'extract'")
    p.add_argument("--out", required=True, help="output score matrix path")
    p.add_argument("--model-name", default="lbp")
    p.add_argument("--gallery-split", default="train")
    p.add_argument("--probe-split", default="test")
    p.add_argument("--temperature", type=float, default=None,
                   help="softmax temperature (default: median gallery distance)")
    p.add_argument("--truth-out", default=None,
                   help="also write probe truth labels to this path")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("fuse", help="max-rule fusion of score matrices")
    p.add_argument("--method", choices=("basic", "d2s", "d2sr", "avg-diff", "diff1"),
                   required=True)
    p.add_argument("--scores", nargs="+", required=True, help="two or more score files")
    p.add_argument("--truth", default=None, help="truth file for fused accuracy")
    p.add_argument("--out", default=None, help="write per-sample decisions here")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("evaluate", help="rank/CMC report with optional stratified errors")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--manifest", default=None,
                   help="manifest for aspect/intensity stratification of the probes")
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("stats", help="dataset distribution histograms")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("bias", help="dataset-identification experiment")
    p.add_argument("--manifests", nargs="+", required=True, help="two or more manifests")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--train-fraction", type=float, default=0.6)
    p.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    _add_seed(p)
    p.set_defaults(func=_cmd_bias)

    p = sub.add_parser("run", help="execute a recipe of subcommands, fail-fast")
    p.add_argument("recipe", help="text file with one subcommand invocation per line")
    _add_seed(p)
    p.set_defaults(func=_cmd_run)

    return parser


def _cmd_manifest(ns) -> int:
    overrides = read_side_overrides(ns.side_overrides) if ns.side_overrides else None
    manifest = build_manifest(ns.root, ns.dataset_name, layout=ns.layout,
                              labels_path=ns.labels, side_overrides=overrides)
    manifest.write(ns.out)
    print(f"wrote {len(manifest)} entries ({len(manifest.subjects())} subjects) to {ns.out}")
    return 0


def _cmd_split(ns) -> int:
    manifest = DatasetManifest.read(ns.manifest)
    try:
        ratios = SplitRatios.parse(ns.ratios)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    result = split_manifest(manifest, ratios, resolve_seed(ns.seed))
    result.write(ns.out)
    counts = {s: len(result.split_entries(s)) for s in ("train", "val", "test")}
    print(f"split {len(result)} entries: {counts['train']} train / "
          f"{counts['val']} val / {counts['test']} test -> {ns.out}")
    return 0


def _cmd_align(ns) -> int:
    manifest = DatasetManifest.read(ns.manifest)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    skipped = 0
    for entry in manifest:
        if entry.side == "unknown":
            if ns.skip_unknown:
                skipped += 1
                continue
            raise DataError(
                f"{entry.image_id}: side is unknown; rerun with --skip-unknown or "
                f"provide a side-override file when building the manifest"
            )
        pixels = align_side(load_image(entry.path), entry.side, ns.target_side)
        path = out_dir / (entry.image_id.replace("/", "_") + ".png")
        save_image(pixels, path)
        entries.append(ManifestEntry(entry.image_id, str(path), entry.subject,
                                     entry.dataset_name, ns.target_side, entry.split,
                                     pixels.shape[1], pixels.shape[0]))
    DatasetManifest(entries).write(ns.out)
    note = f" ({skipped} unknown-side entries skipped)" if skipped else ""
    print(f"aligned {len(entries)} images to {ns.target_side}{note} -> {ns.out}")
    return 0


def _load_augment_config(ns) -> aug.AugmentConfig:
    if ns.augment_config:
        return aug.AugmentConfig.from_file(ns.augment_config)
    return aug.AugmentConfig.reduced() if ns.preset == "reduced" else aug.AugmentConfig()


def _cmd_augment(ns) -> int:
    manifest = DatasetManifest.read(ns.manifest)
    config = _load_augment_config(ns)
    result = aug.augment_dataset(manifest, config, ns.out_dir,
                                 seed=resolve_seed(ns.seed), aligned_mode=ns.aligned,
                                 jobs=ns.jobs)
    result.write(ns.out)
    plan_size = len(aug.plan_augmentations(config, ns.aligned))
    n_train = len(manifest.split_entries("train"))
    raw = len(result)
    print(f"plan of {plan_size} transforms over {n_train} train images: "
          f"{raw} total entries -> {ns.out}")
    print(f"counts: raw={raw} crop_expanded={raw * 5} (five-crop preprocessing view)")
    return 0


def _extract_one(args) -> np.ndarray:
    path, config = args
    return lbp.extract_features(load_image(path), config)


def _cmd_extract(ns) -> int:
    manifest = DatasetManifest.read(ns.manifest)
    config = lbp.LbpConfig(grid_rows=ns.grid_rows, grid_cols=ns.grid_cols,
                           working_size=ns.working_size)
    if ns.split:
        wanted = set(ns.split.split(","))
        entries = [e for e in manifest if e.split in wanted]
    else:
        entries = list(manifest)
    if not entries:
        raise DataError("no manifest entries selected for feature extraction")
    if ns.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            features = list(pool.map(_extract_one, [(e.path, config) for e in entries],
                                     chunksize=8))
    else:
        features = [lbp.extract_features(load_image(e.path), config) for e in entries]
    lbp.write_feature_cache(ns.out, [e.image_id for e in entries], np.stack(features))
    print(f"extracted {len(entries)} feature vectors of length {config.feature_length} -> {ns.out}")
    return 0


def _cmd_classify(ns) -> int:
    manifest = DatasetManifest.read(ns.manifest)
    ids, features = lbp.read_feature_cache(ns.features)
    feature_of = {image_id: row for image_id, row in zip(ids, features)}

    def rows_for(split: str) -> tuple[list[str], np.ndarray]:
        entries = manifest.split_entries(split)
        if not entries:
            raise DataError(f"manifest has no entries in split {split!r}")
        missing = [e.image_id for e in entries if e.image_id not in feature_of]
        if missing:
            raise DataError(f"feature cache is missing {len(missing)} ids, "
                            f"first: {missing[0]!r}")
        return [e.image_id for e in entries], np.stack([feature_of[e.image_id] for e in entries])

    gallery_ids, gallery_features = rows_for(ns.gallery_split)
    probe_ids, probe_features = rows_for(ns.probe_split)
    labels = [manifest.by_id(i).subject for i in gallery_ids]
    gallery = lbp.Gallery.fit(gallery_features, labels, temperature=ns.temperature)
    rows = np.stack([lbp.classify(gallery, probe) for probe in probe_features])
    matrix = fusion.ScoreMatrix(ns.model_name, gallery.classes, tuple(probe_ids), rows)
    fusion.write_scores(matrix, ns.out)
    if ns.truth_out:
        fusion.write_truth({i: manifest.by_id(i).subject for i in probe_ids}, ns.truth_out)
    print(f"scored {len(probe_ids)} probes over {len(gallery.classes)} classes -> {ns.out}")
    return 0


def _cmd_fuse(ns) -> int:
    matrices = [fusion.read_scores(path) for path in ns.scores]
    if len(matrices) < 2:
        raise DataError("fusion needs at least two score files")
    decisions = fusion.fuse_max(matrices, ns.method)
    if ns.out:
        fusion.write_decisions(decisions, ns.out)
    if ns.truth:
        truth = fusion.read_truth(ns.truth)
        accuracy = fusion.fused_accuracy(decisions, truth)
        singles = {m.model_name: ev.rank_accuracy(m, truth, 1).rank1 for m in matrices}
        for name, value in singles.items():
            print(f"rank1[{name}]={value:.6f}")
        print(f"fused_accuracy={accuracy:.6f}")
    else:
        print(f"fused {len(decisions)} samples from {len(matrices)} models")
    return 0


def _cmd_evaluate(ns) -> int:
    matrix = fusion.read_scores(ns.scores)
    truth = fusion.read_truth(ns.truth)
    result = ev.rank_accuracy(matrix, truth, ns.max_rank)
    report_dir = Path(ns.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    summary: dict[str, object] = {
        "model": matrix.model_name,
        "n_samples": matrix.n_samples,
        "n_classes": matrix.n_classes,
        "rank1": result.rank1,
    }
    for rank in range(1, len(result.cmc) + 1):
        summary[f"cmc[{rank}]"] = float(result.cmc[rank - 1])
    report.write_cmc_csv(report_dir / "cmc.csv", result.cmc)

    strata_files = []
    if ns.manifest:
        manifest = DatasetManifest.read(ns.manifest)
        correct = ev.rank1_correctness(matrix, truth)
        for key in ("aspect_ratio", "mean_intensity"):
            strata = ev.stratify(manifest, correct, key)
            name = f"{key}_error"
            report.write_strata_csv(report_dir / f"{name}.csv", strata)
            strata_files.append((name, strata))
        bins, counts = ev.distribution_histogram(manifest, "resolution")
        report.write_histogram_csv(report_dir / "resolution_hist.csv", bins, counts)
    report.write_key_values(report_dir / "report.txt", summary)

    if not ns.no_figures:
        from earbench import figures
        figures.plot_cmc(report_dir / "cmc.png", result.cmc)
        for name, strata in strata_files:
            figures.plot_error_rates(report_dir / f"{name}.png", strata,
                                     name.replace("_", " "))
        if ns.manifest:
            figures.plot_histogram(report_dir / "resolution_hist.png", bins.labels(),
                                   counts, "resolution distribution")
    print(f"rank1={result.rank1:.6f} (report in {report_dir})")
    return 0


def _cmd_stats(ns) -> int:
    manifest = DatasetManifest.read(ns.manifest)
    report_dir = Path(ns.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    summary: dict[str, object] = {
        "n_entries": len(manifest),
        "n_subjects": len(manifest.subjects()),
        "datasets": ",".join(manifest.dataset_names()),
    }
    for split in ("train", "val", "test", "unassigned"):
        summary[f"n_{split}"] = len(manifest.split_entries(split))
    histograms = {}
    for key in ("resolution", "aspect_ratio"):
        bins, counts = ev.distribution_histogram(manifest, key)
        report.write_histogram_csv(report_dir / f"{key}_hist.csv", bins, counts)
        histograms[key] = (bins, counts)
    report.write_key_values(report_dir / "report.txt", summary)
    if not ns.no_figures:
        from earbench import figures
        for key, (bins, counts) in histograms.items():
            figures.plot_histogram(report_dir / f"{key}_hist.png", bins.labels(), counts,
                                   f"{key.replace('_', ' ')} distribution")
    print(f"stats for {len(manifest)} entries (report in {report_dir})")
    return 0


def _cmd_bias(ns) -> int:
    manifests = [DatasetManifest.read(path) for path in ns.manifests]
    if len(manifests) < 2:
        raise DataError("bias experiment needs at least two manifests")
    result = ev.bias_experiment(manifests, split_seed=resolve_seed(ns.seed),
                                train_fraction=ns.train_fraction)
    report_dir = Path(ns.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    report.write_key_values(report_dir / "bias_report.txt", {
        "datasets": ",".join(result.dataset_names),
        "n_train": result.n_train,
        "n_test": result.n_test,
        "accuracy": result.accuracy,
    })
    report.write_confusion_csv(report_dir / "confusion.csv", result.dataset_names,
                               result.confusion)
    if not ns.no_figures:
        from earbench import figures
        figures.plot_confusion(report_dir / "confusion.png", result.dataset_names,
                               result.confusion)
    print(f"dataset identification accuracy={result.accuracy:.6f} (report in {report_dir})")
    return 0


def _cmd_run(ns) -> int:
    recipe_path = Path(ns.recipe)
    if not recipe_path.is_file():
        raise DataError(f"recipe file not found: {recipe_path}")
    stages: list[tuple[int, str, list[str]]] = []
    for lineno, raw in enumerate(recipe_path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            print(f"error: {recipe_path}:{lineno}: {exc}", file=sys.stderr)
            return 1
        if tokens[0] not in PIPELINE_COMMANDS:
            print(f"error: {recipe_path}:{lineno}: unknown stage {tokens[0]!r} "
                  f"(recipes may use: {', '.join(PIPELINE_COMMANDS)})", file=sys.stderr)
            return 1
        stages.append((lineno, line, tokens))

    previous_env = os.environ.get(SEED_ENV_VAR)
    if ns.seed is not None:
        os.environ[SEED_ENV_VAR] = str(ns.seed)
    try:
        for index, (lineno, line, tokens) in enumerate(stages, 1):
            print(f"[stage {index}/{len(stages)}] {line}")
            start = time.perf_counter()
            code = run(tokens)
            elapsed = time.perf_counter() - start
            if code != 0:
                print(f"[stage {index}/{len(stages)}] failed with exit code {code} "
                      f"after {elapsed:.2f}s", file=sys.stderr)
                return code
            print(f"[stage {index}/{len(stages)}] ok ({elapsed:.2f}s)")
    finally:
        if ns.seed is not None:
            if previous_env is None:
                os.environ.pop(SEED_ENV_VAR, None)
            else:
                os.environ[SEED_ENV_VAR] = previous_env
    return 0


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(ns, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return ns.func(ns) or 0
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
