"""Adapter CLI: fine-tune from a JSON config, export score matrices."""

from __future__ import annotations

import argparse
import sys

from cnn_adapter.config import FineTuneConfig
from cnn_adapter.formats import FormatError
from cnn_adapter.models import WeightsError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="cnn-adapter",
                     description="Two-stage CNN fine-tuning and score export.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("finetune", help="run the configured fine-tuning stages")
    p.add_argument("--config", required=True, help="JSON fine-tune configuration")
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("export", help="write softmax scores for a manifest split")
    p.add_argument("--model", required=True, help="artifact written by finetune")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--model-name", default=None)
    p.set_defaults(func=_cmd_export)

    return parser


def _cmd_finetune(ns) -> int:
    from cnn_adapter.train import finetune_two_stage

    config = FineTuneConfig.from_file(ns.config)
    artifact = finetune_two_stage(config)
    for stage, losses in artifact["history"].items():
        trail = " ".join(f"{v:.4f}" for v in losses)
        print(f"{stage}: {trail}")
    print(f"saved {config.architecture} artifact "
          f"({len(artifact['classes'])} classes) to {config.output}")
    return 0


def _cmd_export(ns) -> int:
    from cnn_adapter.export import export_scores
    from cnn_adapter.train import load_artifact

    artifact = load_artifact(ns.model)
    count = export_scores(artifact, ns.manifest, ns.out, split=ns.split,
                          model_name=ns.model_name)
    print(f"exported {count} probe rows to {ns.out}")
    return 0


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(ns, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return ns.func(ns) or 0
    except (FormatError, WeightsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
