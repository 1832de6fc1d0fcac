"""Main entrypoint

``python -m app.src.main <subcommand> ...``
"""

import argparse
import dataclasses
import os
import sys

from .codec import deserialize_log
from .config import DesyncPolicy, HarnessConfig, Mode
from .errors import HarnessError, LogFormatError, LogIOError, UsageError
from .fixtures import CATALOG, FixtureOptions, catalog_lines, run_fixture
from .graph import build_graph, dump, export_dot, find_cycles
from .harness import OVERHEAD_WARN_RATIO, Outcome, RunRecord, overhead, record_until_expected, run_once, stats
from .logger import logger
from .notify import NotificationServiceRegistry


DEFAULT_LOG = "rr.log"
EXIT_USAGE = 2



def _add_harness_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Harness YAML file with default settings")
    parser.add_argument("--time-limit-ms", type=int, help="Wall-clock limit per run")
    parser.add_argument("--expected-status", type=int, help="Exit status of an expected run")
    parser.add_argument("--expected-stdout-sha256", help="Hex digest the child's stdout must match")
    parser.add_argument("--desync-mode", choices=[p.value for p in DesyncPolicy])
    parser.add_argument("--desync-timeout-ms", type=int)
    parser.add_argument("command", nargs=argparse.REMAINDER, help="Target command (optional leading '--')")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rr-channel",
        description="Record and replay of channel communication in concurrent programs",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("record", help="Record one run, keeping its log whatever the outcome")
    p.add_argument("--log", default=DEFAULT_LOG)
    _add_harness_args(p)

    p = sub.add_parser("replay", help="Replay one run against a recorded log")
    p.add_argument("--log", required=True)
    _add_harness_args(p)

    p = sub.add_parser("stats", help="Run a command repeatedly and count outcomes")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.NOOP.value)
    p.add_argument("--log")
    _add_harness_args(p)

    p = sub.add_parser("record-until-expected", help="Record until a run is expected")
    p.add_argument("--max-tries", type=int)
    p.add_argument("--log", default=DEFAULT_LOG)
    _add_harness_args(p)

    p = sub.add_parser("overhead", help="Compare record and noop wall times")
    p.add_argument("--runs", type=int, default=10)
    _add_harness_args(p)

    p = sub.add_parser("dump", help="Print a log one entry per line")
    p.add_argument("log")

    p = sub.add_parser("graph", help="Export the thread/channel graph of a log")
    p.add_argument("--dot", default="-", help="Output file, '-' for stdout")
    p.add_argument("log")

    p = sub.add_parser("cycles", help="Report communication cycles (exit 1 when found)")
    p.add_argument("log")

    p = sub.add_parser("fixtures", help="Run a fixture program")
    p.add_argument("name", nargs="?", choices=sorted(CATALOG))
    p.add_argument("--list", action="store_true", help="List the fixture catalog")
    p.add_argument("--messages", type=int)
    p.add_argument("--payload-bytes", type=int, default=8)

    return parser


def _command(args: argparse.Namespace) -> list[str]:
    command = list(args.command)
    if command and command[0] == "--":
        command = command[1:]
    if not command:
        raise UsageError("No command given")
    return command


def _harness_config(args: argparse.Namespace) -> HarnessConfig:
    """File (or built-in) defaults overridden by command-line flags."""
    cfg = HarnessConfig.from_yaml(args.config) if args.config else HarnessConfig.defaults()

    overrides = {
        "TIME_LIMIT_MS": args.time_limit_ms,
        "EXPECTED_STATUS": args.expected_status,
        "EXPECTED_STDOUT_SHA256": args.expected_stdout_sha256,
        "DESYNC_MODE": args.desync_mode,
        "DESYNC_TIMEOUT_MS": args.desync_timeout_ms,
        "MAX_TRIES": getattr(args, "max_tries", None),
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}

    for field in ("TIME_LIMIT_MS", "DESYNC_TIMEOUT_MS", "MAX_TRIES"):
        if field in overrides and overrides[field] < 1:
            raise UsageError(f"--{field.lower().replace('_', '-')} must be >= 1")

    return dataclasses.replace(cfg, **overrides)


def _notify(cfg: HarnessConfig, title: str, summary: str, failed: bool = False) -> None:
    if not cfg.NOTIFY:
        return
    NotificationServiceRegistry.load_all(cfg.NOTIFIERS_DIR)
    NotificationServiceRegistry.notify(cfg.NOTIFY, title, summary, failed)


# ==================== HARNESS COMMANDS ====================

def cmd_record(args: argparse.Namespace) -> int:
    cfg = _harness_config(args)
    command = _command(args)

    # A log from an earlier run must not pass for this one
    try:
        os.remove(args.log)
    except FileNotFoundError:
        pass

    outcome, ms = run_once(command, Mode.RECORD, cfg.TIME_LIMIT_MS, log_path=args.log, cfg=cfg)
    print(RunRecord(1, outcome, ms, _size(args.log)).line())
    return 0 if _size(args.log) is not None else 1


def cmd_replay(args: argparse.Namespace) -> int:
    cfg = _harness_config(args)
    outcome, ms = run_once(_command(args), Mode.REPLAY, cfg.TIME_LIMIT_MS, log_path=args.log, cfg=cfg)
    print(RunRecord(1, outcome, ms).line())
    return 0 if outcome is Outcome.EXPECTED else 1


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = _harness_config(args)
    report = stats(_command(args), args.runs, Mode(args.mode), cfg.TIME_LIMIT_MS, args.log, cfg=cfg)

    for line in report.lines():
        print(line)
    print(report.table(), file=sys.stderr)

    _notify(
        cfg, f"rr-channel stats ({args.mode})", report.summary_line(),
        failed=report.counts[Outcome.EXPECTED] < report.runs,
    )
    return 0


def cmd_record_until_expected(args: argparse.Namespace) -> int:
    cfg = _harness_config(args)
    result = record_until_expected(_command(args), cfg.MAX_TRIES, cfg.TIME_LIMIT_MS, log_path=args.log, cfg=cfg)

    if result.success:
        summary = f"captured log={result.log_path} tries={result.tries}"
    else:
        summary = f"failed tries={result.tries}"
    print(summary)

    _notify(cfg, "rr-channel record-until-expected", summary, failed=not result.success)
    return 0 if result.success else 1


def cmd_overhead(args: argparse.Namespace) -> int:
    cfg = _harness_config(args)
    report = overhead(_command(args), args.runs, cfg.TIME_LIMIT_MS, cfg=cfg)

    summary = (
        f"noop_mean_ms={report.noop.mean_ms:.1f} "
        f"record_mean_ms={report.record.mean_ms:.1f} ratio={report.ratio:.2f}"
    )
    print(summary)

    _notify(cfg, "rr-channel overhead", summary, failed=report.ratio > OVERHEAD_WARN_RATIO)
    return 0


# ==================== LOG TOOLS ====================

def cmd_dump(args: argparse.Namespace) -> int:
    sys.stdout.write(dump(deserialize_log(args.log)))
    return 0


def cmd_graph(args: argparse.Namespace) -> int:
    dot = export_dot(build_graph(deserialize_log(args.log)))
    if args.dot == "-":
        sys.stdout.write(dot)
    else:
        with open(args.dot, "w") as f:
            f.write(dot)
        logger.info(f"Wrote communication graph to {args.dot}")
    return 0


def cmd_cycles(args: argparse.Namespace) -> int:
    report = find_cycles(build_graph(deserialize_log(args.log)))
    sys.stdout.write(report.render())
    return 0 if report.acyclic else 1


def cmd_fixtures(args: argparse.Namespace) -> int:
    if args.list:
        for line in catalog_lines():
            print(line)
        return 0
    if args.name is None:
        raise UsageError("A fixture name or --list is required")
    if args.payload_bytes < 0 or (args.messages is not None and args.messages < 1):
        raise UsageError("--messages must be >= 1 and --payload-bytes >= 0")

    return run_fixture(args.name, FixtureOptions(args.messages, args.payload_bytes))


def _size(path: str) -> int | None:
    try:
        return os.path.getsize(path)
    except OSError:
        return None


COMMANDS = {
    "record": cmd_record,
    "replay": cmd_replay,
    "stats": cmd_stats,
    "record-until-expected": cmd_record_until_expected,
    "overhead": cmd_overhead,
    "dump": cmd_dump,
    "graph": cmd_graph,
    "cycles": cmd_cycles,
    "fixtures": cmd_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        return COMMANDS[args.subcommand](args)

    except UsageError as e:
        print(f"rr-channel: {e}", file=sys.stderr)
        return EXIT_USAGE

    except (FileNotFoundError, ValueError, LogFormatError, LogIOError, HarnessError) as e:
        logger.error(e)
        return EXIT_USAGE

    except Exception as e:
        logger.exception(f"rr-channel {args.subcommand} failed: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
