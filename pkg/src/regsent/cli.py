"""Command line entry points.

Exit codes: 0 success, 1 usage or configuration problem, 2 data validation
failure, 3 numerical failure. Every failure prints a single machine-parsable
line on stderr: `regsent: error[<kind>]: <reason>`.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, DataValidationError, NumericalError
from .fixtures import write_corpus_fixture
from .pipeline import (
    load_config,
    run_pipeline,
    stage_aggregate,
    stage_classify,
    stage_clean,
    stage_import_predictions,
    stage_ingest,
    stage_regress,
    stage_report,
    stage_shift_test,
    stage_stepwise,
    stage_train,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep codes ours
        raise _UsageError(message)


_STAGES = {
    "ingest": stage_ingest,
    "clean": stage_clean,
    "train": stage_train,
    "classify": stage_classify,
    "import-predictions": stage_import_predictions,
    "aggregate": stage_aggregate,
    "shift-test": stage_shift_test,
    "regress": stage_regress,
    "stepwise": stage_stepwise,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="regsent", description="Regional sentiment pipeline")
    parser.add_argument("--version", action="version", version=f"regsent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_stage_parser(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out", default="out", help="artifact directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="override a config entry, e.g. --set classifier.kind=logistic",
        )
        return p

    add_stage_parser("ingest", "load posts, filter located ones, resolve regions")
    add_stage_parser("clean", "run the normalization chain over located posts")
    report = add_stage_parser("report", "corpus frequency diagnostics")
    report.add_argument("kind", choices=("hashtags", "emojis"))
    add_stage_parser("train", "train and evaluate the sentiment classifier")
    add_stage_parser("classify", "label cleaned posts with the trained model")
    add_stage_parser("import-predictions", "use third-party predictions instead of the local model")
    add_stage_parser("aggregate", "fold predictions into per-region period counts")
    add_stage_parser("shift-test", "before/after proportion tests per region and pooled")
    add_stage_parser("regress", "fit the outcome on sentiment plus features")
    add_stage_parser("stepwise", "AIC-guided predictor selection")
    add_stage_parser("pipeline", "run every stage in order and write summary.md")

    fixture = sub.add_parser("make-fixture", help="write the bundled synthetic input set")
    fixture.add_argument("--out", required=True, help="directory for the fixture files")
    fixture.add_argument("--seed", type=int, default=13)
    fixture.add_argument("--posts", type=int, default=500)
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.command == "make-fixture":
        config_path = write_corpus_fixture(Path(args.out), n_posts=args.posts, seed=args.seed)
        print(config_path)
        return
    cfg = load_config(args.config, overrides=args.overrides, seed=args.seed)
    out_dir = Path(args.out)
    if args.command == "pipeline":
        run_pipeline(cfg, out_dir)
        print(out_dir / "summary.md")
        return
    if args.command == "report":
        stage_report(cfg, out_dir, args.kind)
        return
    _STAGES[args.command](cfg, out_dir)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _run(args)
        return 0
    except _UsageError as exc:
        print(f"regsent: error[usage]: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"regsent: error[config]: {exc}", file=sys.stderr)
        return 1
    except DataValidationError as exc:
        print(f"regsent: error[data]: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"regsent: error[numeric]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
