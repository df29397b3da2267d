"""Command-line entry point: ``fairbench run|table|tradeoff``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

from . import bench
from .errors import FairbenchError

# option sets, in the order they are listed in help output
NOTION_CHOICES = ["dem_par", "eq_opp", "forp", "pred_par", "acc_eq", "f1_score_eq", "pred_eq"]
OUTPUT_TYPE_CHOICES = ["hard", "soft"]
SENS_ATTR_CHOICES = ["binary", "intersectional", "parallel"]
TARGET_CHOICES = ["biased", "unbiased"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _k_list(text: str) -> list[float]:
    try:
        ks = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not ks or any(v <= 0 for v in ks) or ks != sorted(ks):
        raise argparse.ArgumentTypeError("k values must be positive and ascending")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairbench", description="Fair classification benchmark.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute a benchmark sweep")
    run.add_argument("--config", required=True, help="run configuration (JSON)")
    run.add_argument("--output_dir", help="override the config's output directory")
    run.add_argument("--workers", type=int, help="parallel worker processes")

    table = sub.add_parser("table", help="max performance under violation bounds")
    table.add_argument("--records", required=True)
    table.add_argument("--notion", required=True, choices=NOTION_CHOICES)
    table.add_argument("--output_type", required=True, choices=OUTPUT_TYPE_CHOICES)
    table.add_argument("--k", type=_k_list, help="comma-separated bounds; inferred from the naive run if absent")
    table.add_argument("--sens_attr", choices=SENS_ATTR_CHOICES, action="append",
                       help="restrict to these formats (repeatable)")
    table.add_argument("--target", choices=TARGET_CHOICES, default="biased")
    table.add_argument("--csv", help="also write the table as CSV to this path")

    trade = sub.add_parser("tradeoff", help="violation/performance curve data with error ellipses")
    trade.add_argument("--records", required=True)
    trade.add_argument("--notion", required=True, choices=NOTION_CHOICES)
    trade.add_argument("--output_type", required=True, choices=OUTPUT_TYPE_CHOICES)
    trade.add_argument("--sens_attr", required=True, choices=SENS_ATTR_CHOICES)
    trade.add_argument("--target", choices=TARGET_CHOICES, default="biased")
    trade.add_argument("--out", help="write CSV here instead of stdout")
    return parser


def _write_atomic(path, text: str):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _records(path):
    records = bench.read_records(path)
    if not records:
        raise FairbenchError(f"no records in {path}")
    return records


def _cmd_run(args) -> int:
    config = bench.load_config(args.config)
    if args.output_dir:
        config["output_dir"] = args.output_dir
    if not config.get("output_dir"):
        raise FairbenchError("no output_dir in config or on the command line")
    records = bench.run_benchmark(config, workers=args.workers)
    failed = sum(r.failed for r in records)
    print(f"{len(records)} runs, {failed} failed; records in {Path(config['output_dir']) / 'records.jsonl'}")
    return 0


def _cmd_table(args) -> int:
    records = _records(args.records)
    spec = bench.auto_table_spec(records, args.notion, args.output_type, args.sens_attr, args.target, args.k)
    table = bench.performance_table(records, spec)
    if args.csv:
        _write_atomic(args.csv, table.to_csv())
    sys.stdout.write(table.to_text())
    return 0


def _cmd_tradeoff(args) -> int:
    records = _records(args.records)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = bench.tradeoff_export(records, args.notion, args.output_type, args.sens_attr, args.target)
    for w in {str(w.message) for w in caught}:
        print(f"warning: {w}", file=sys.stderr)
    text = bench.rows_to_csv(rows)
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"run": _cmd_run, "table": _cmd_table, "tradeoff": _cmd_tradeoff}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (FairbenchError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"fairbench: error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
