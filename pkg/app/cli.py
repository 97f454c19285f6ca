"""
Command-line front-end.

    dynkin run SPEC [--seed N] [--out DIR] [--jobs N] [--emit-paths]
    dynkin builtins

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage,
validation and solver-refusal errors.
"""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from rich import box
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from app.config import settings
from app.core.exceptions import DynkinError
from app.models.experiment import CheckReport, RunSummary
from app.services.builtin_service import builtin_service
from app.services.experiment_service import experiment_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


def _number(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def summary_table(summary: RunSummary, reports: Dict[str, CheckReport]) -> Table:
    table = Table(title=f"{summary.name}  Q(0,x0) = {summary.value:.10g}", box=box.SIMPLE_HEAVY)
    table.add_column("Check", style="white")
    table.add_column("Value", justify="right")
    table.add_column("Reference", justify="right")
    table.add_column("Margin", justify="right")
    table.add_column("Stderr", justify="right")
    table.add_column("Pass", justify="center")
    for label, report in reports.items():
        table.add_row(
            label,
            _number(report.value),
            _number(report.reference),
            _number(report.margin),
            _number(report.stderr),
            "[green]yes[/green]" if report.passed else "[red]no[/red]",
        )
    return table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynkin",
        description="Risk-sensitive Dynkin games with Poisson signal times: solve and verify experiments.",
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run an experiment specification (JSON or TOML)")
    run.add_argument("spec", help="Path to the experiment spec")
    run.add_argument("--seed", type=int, default=None, help="Override the master seed")
    run.add_argument("--out", default=None, help="Output directory (default: spec output.directory or settings)")
    run.add_argument("--jobs", type=int, default=settings.default_jobs, help="Worker threads; never changes results")
    run.add_argument("--emit-paths", action="store_true", help="Write per-path realizations to paths.csv")

    commands.add_parser("builtins", help="List payoff and dynamics built-ins with parameter schemas")
    return parser


def run_command(args: argparse.Namespace, console: Console) -> int:
    if args.jobs < 1:
        console.print("[red]error:[/red] --jobs must be >= 1")
        return EXIT_USAGE
    try:
        spec = experiment_service.load_spec(args.spec, seed=args.seed)
        out_dir = args.out or spec.output.directory or settings.output_dir
        summary, reports = experiment_service.run(spec, out_dir=out_dir, jobs=args.jobs, emit_paths=args.emit_paths)
    except DynkinError as e:
        logger.error(f"Run aborted: {str(e)}")
        console.print(f"[red]error:[/red] {escape(str(e))}")
        return EXIT_USAGE

    console.print(summary_table(summary, reports))
    console.print(f"Results written to {out_dir}")
    if not summary.passed:
        failed = [label for label, report in reports.items() if not report.passed]
        console.print(f"[red]failed checks:[/red] {', '.join(failed)}")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def builtins_command(console: Console) -> int:
    console.print_json(json.dumps(builtin_service.list_builtins(), sort_keys=True))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    console = Console()
    if args.command == "builtins":
        return builtins_command(console)
    return run_command(args, console)


if __name__ == "__main__":
    sys.exit(main())
