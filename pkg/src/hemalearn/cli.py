"""Command-line interface.

Subcommands: synth, train-ae, embed, train-clf, zero-shot, report. Each
accepts --config (key = value text), --seed, and --out; the environment
variable HEMALEARN_OUT supplies the default output root. Exit codes:
0 success, 1 user/config error, 2 numerical failure, 3 integrity
(fingerprint) failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import pipeline
from .errors import (
    ConfigError,
    DimensionError,
    InputError,
    IntegrityError,
    NumericalError,
)

EXIT_OK = 0
EXIT_USER = 1
EXIT_NUMERICAL = 2
EXIT_INTEGRITY = 3


def _default_out() -> str:
    return os.environ.get("HEMALEARN_OUT", "hemalearn-run")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="root seed override")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemalearn",
        description="Latent embeddings and disease classifiers over blood-cell expression data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic lineage datasets")
    _add_common(p)

    p = sub.add_parser("train-ae", help="train the autoencoder on upstream data")
    p.add_argument("input", type=Path, help="progenitor matrix file")
    p.add_argument(
        "--allow-any-celltype",
        action="store_true",
        help="permit training on a non-progenitor population",
    )
    _add_common(p)

    p = sub.add_parser("embed", help="encode a dataset with a trained autoencoder")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("input", type=Path)
    _add_common(p)

    p = sub.add_parser("train-clf", help="train a classifier on an embedding file")
    p.add_argument("kind", choices=("ffn", "attn", "gcn"))
    p.add_argument("embedding", type=Path)
    _add_common(p)

    p = sub.add_parser("zero-shot", help="evaluate a classifier on a downstream embedding")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("embedding", type=Path)
    _add_common(p)

    p = sub.add_parser("report", help="aggregate reports and PCA plot data for a run")
    p.add_argument("run_dir", type=Path)
    _add_common(p)

    return parser


def _run(args: argparse.Namespace) -> int:
    out = args.out if args.out is not None else Path(_default_out())
    if args.command == "report":
        path = pipeline.cmd_report(args.run_dir, out)
        print(f"wrote {path}")
        return EXIT_OK

    config = pipeline.load_run_config(args.config, args.seed)
    if args.command == "synth":
        paths = pipeline.cmd_synth(config, out)
        for name, path in paths.items():
            print(f"wrote {name}: {path}")
    elif args.command == "train-ae":
        path = pipeline.cmd_train_ae(args.input, config, out, args.allow_any_celltype)
        print(f"wrote {path}")
    elif args.command == "embed":
        target = out
        if target.suffix != ".hlm":
            target = out / (args.input.stem + "_embedding.hlm")
        path = pipeline.cmd_embed(args.checkpoint, args.input, target)
        print(f"wrote {path}")
    elif args.command == "train-clf":
        path, report = pipeline.cmd_train_clf(args.kind, args.embedding, config, out)
        print(f"wrote {path}")
        print(
            f"{report.model_id} on {report.cell_type}: "
            f"train acc {report.train_accuracy:.4f}, test acc {report.test_accuracy:.4f}"
        )
    elif args.command == "zero-shot":
        report = pipeline.cmd_zero_shot(
            args.checkpoint,
            args.embedding,
            out,
            graph_threshold=config.graph_threshold,
            graph_max_edges=config.graph_max_edges,
        )
        f1 = "-" if report.binary_f1 is None else f"{report.binary_f1:.4f}"
        print(
            f"zero-shot {report.model_id} on {report.cell_type}: "
            f"accuracy {report.test_accuracy:.4f}, binary F1 {f1}"
        )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, InputError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IntegrityError as exc:
        print(f"integrity failure: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    raise SystemExit(main())
