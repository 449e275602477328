"""CLI: `hemalearn-ingest convert --input cells.h5ad ...`"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .convert import ConversionError, convert


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemalearn-ingest",
        description="Convert .h5ad single-cell files into hemalearn matrix files",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("convert", help="convert one .h5ad file")
    p.add_argument("--input", type=Path, required=True, help=".h5ad source file")
    p.add_argument(
        "--celltype-map", type=Path, required=True, help="CSV mapping source cell types"
    )
    p.add_argument("--label-map", type=Path, required=True, help="CSV mapping disease labels")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--celltype-col", default="cell_type", help="obs column with cell types")
    p.add_argument("--label-col", default="disease", help="obs column with disease labels")
    p.add_argument(
        "--drop-unknown",
        action="store_true",
        help="drop selected rows whose label has no mapping instead of failing",
    )
    p.add_argument("--chunk-rows", type=int, default=4096, help="rows per conversion chunk")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = convert(
            args.input,
            args.celltype_map,
            args.label_map,
            args.out,
            celltype_col=args.celltype_col,
            label_col=args.label_col,
            drop_unknown=args.drop_unknown,
            chunk_rows=args.chunk_rows,
        )
    except (ConversionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, info in sorted(manifest.outputs.items()):
        print(f"wrote {name}: {info['rows']} rows -> {info['path']}")
    if manifest.dropped_unknown_labels:
        print(f"dropped {manifest.dropped_unknown_labels} rows with unmapped labels")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
