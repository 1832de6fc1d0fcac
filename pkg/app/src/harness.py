"""Run a target command under noop/record/replay and classify its outcomes.

A run is EXPECTED when the child exits with the expected status (and, if
configured, prints the expected stdout) within the time limit, CRASH when
it dies from a signal, TIMEOUT when it is killed at the time limit, and
UNEXPECTED otherwise. Runs are sequential.
"""

import hashlib
import os
import subprocess
import time

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .config import DesyncPolicy, HarnessConfig, Mode, RrConfig
from .errors import HarnessError, UsageError
from .logger import logger


OVERHEAD_WARN_RATIO = 3.0



class Outcome(str, Enum):
    EXPECTED = "expected"
    UNEXPECTED = "unexpected"
    CRASH = "crash"
    TIMEOUT = "timeout"



@dataclass(frozen=True)
class RunRecord:
    """One harness run.

    Attributes:
        index: Run number, from 1.
        outcome: Classified outcome.
        ms: Wall time in milliseconds.
        log_bytes: Size of the recorded log, ``None`` when nothing was recorded.
    """

    index: int
    outcome: Outcome
    ms: float
    log_bytes: int | None = None

    def line(self) -> str:
        log_bytes = "-" if self.log_bytes is None else str(self.log_bytes)
        return f"run={self.index} outcome={self.outcome.value} ms={self.ms:.1f} log_bytes={log_bytes}"



@dataclass
class RunReport:
    """Aggregate of repeated runs of one command in one mode."""

    mode: Mode
    records: list[RunRecord] = field(default_factory=list)


    @property
    def runs(self) -> int:
        return len(self.records)


    @property
    def counts(self) -> dict[Outcome, int]:
        counter = Counter(r.outcome for r in self.records)
        return {outcome: counter.get(outcome, 0) for outcome in Outcome}


    @property
    def mean_ms(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.ms for r in self.records) / len(self.records)


    @property
    def intermittent(self) -> bool:
        """True when runs did not all end the same way."""
        return len({r.outcome for r in self.records}) > 1


    @property
    def eligible(self) -> bool:
        """True when at least one run was expected, so it can be recorded."""
        return self.counts[Outcome.EXPECTED] > 0


    def summary_line(self) -> str:
        counts = " ".join(f"{o.value}={n}" for o, n in self.counts.items())
        return (
            f"summary mode={self.mode.value} runs={self.runs} {counts} "
            f"mean_ms={self.mean_ms:.1f} intermittent={str(self.intermittent).lower()}"
        )


    def lines(self) -> list[str]:
        """Machine-readable output: one line per run, then the summary."""
        return [r.line() for r in self.records] + [self.summary_line()]


    def table(self) -> str:
        """Human-readable summary table."""
        header = f"{'mode':<8}{'runs':>6}" + "".join(f"{o.value:>12}" for o in Outcome) + f"{'mean_ms':>10}"
        row = (
            f"{self.mode.value:<8}{self.runs:>6}"
            + "".join(f"{n:>12}" for n in self.counts.values())
            + f"{self.mean_ms:>10.1f}"
        )
        return f"{header}\n{row}"



@dataclass
class CaptureResult:
    """Result of :func:`record_until_expected`.

    Attributes:
        log_path: Where the expected execution's log was kept, ``None`` on failure.
        tries: Number of runs performed.
        outcomes: Outcome of each try in order.
    """

    log_path: str | None
    tries: int
    outcomes: list[Outcome]

    @property
    def success(self) -> bool:
        return self.log_path is not None



@dataclass
class OverheadReport:
    noop: RunReport
    record: RunReport

    @property
    def ratio(self) -> float:
        if self.noop.mean_ms == 0:
            return float("inf")
        return self.record.mean_ms / self.noop.mean_ms



def classify(returncode: int | None, stdout: bytes, timed_out: bool, cfg: HarnessConfig) -> Outcome:
    """Map a finished child to an :class:`Outcome`."""
    if timed_out:
        return Outcome.TIMEOUT
    if returncode is None or returncode < 0:
        return Outcome.CRASH
    if returncode != cfg.EXPECTED_STATUS:
        return Outcome.UNEXPECTED
    if cfg.EXPECTED_STDOUT_SHA256:
        digest = hashlib.sha256(stdout).hexdigest()
        if digest != cfg.EXPECTED_STDOUT_SHA256.lower():
            return Outcome.UNEXPECTED
    return Outcome.EXPECTED


def _child_env(mode: Mode, log_path: str | None, cfg: HarnessConfig) -> dict[str, str]:
    rr = RrConfig(
        mode=mode,
        desync_policy=DesyncPolicy(cfg.DESYNC_MODE),
        record_file=log_path,
        desync_timeout_ms=cfg.DESYNC_TIMEOUT_MS,
    )
    return os.environ | rr.to_env()


def run_once(
        command: list[str],
        mode: Mode,
        time_limit_ms: int,
        *,
        log_path: str | None = None,
        cfg: HarnessConfig | None = None,
    ) -> tuple[Outcome, float]:
    """Run ``command`` once with the channel mode set in its environment.

    Args:
        command: Program and arguments.
        mode: Channel mode for the child.
        time_limit_ms: Wall-clock limit; the child is killed when it elapses.
        log_path: Log written (record) or read (replay) by the child.
        cfg: Expected status, stdout digest and desync settings.

    Returns:
        ``(outcome, wall time in ms)``.

    Raises:
        HarnessError: if the command cannot be started.
        UsageError: if record/replay is requested without a log path.
    """
    cfg = cfg or HarnessConfig.defaults()
    if mode is not Mode.NOOP and not log_path:
        raise UsageError(f"A log path is required in {mode.value} mode")

    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            command,
            env=_child_env(mode, log_path, cfg),
            stdout=subprocess.PIPE,
        )
    except OSError as e:
        raise HarnessError(f"Failed to start {command}: {e}") from e

    timed_out = False
    try:
        stdout, _ = proc.communicate(timeout=time_limit_ms / 1000)
    except subprocess.TimeoutExpired:
        timed_out = True
        proc.kill()
        stdout, _ = proc.communicate()

    elapsed_ms = (time.perf_counter() - start) * 1000
    outcome = classify(proc.returncode, stdout or b"", timed_out, cfg)
    logger.debug(f"{mode.value} run of {command[0]} exited {proc.returncode}: {outcome.value} in {elapsed_ms:.1f} ms")

    return outcome, elapsed_ms


def _file_size(path: str) -> int | None:
    try:
        return os.path.getsize(path)
    except OSError:
        return None


def _discard(path: str) -> None:
    try:
        os.remove(path)
    except FileNotFoundError:
        pass


def record_until_expected(
        command: list[str],
        max_tries: int,
        time_limit_ms: int,
        *,
        log_path: str,
        cfg: HarnessConfig | None = None,
    ) -> CaptureResult:
    """Record runs until one is EXPECTED, keeping that run's log.

    Each try records to a scratch file next to ``log_path``; the first
    expected try's log is moved to ``log_path``, others are deleted.

    Raises:
        UsageError: if ``max_tries`` is below 1.
        HarnessError: if the command cannot be started.
    """
    if max_tries < 1:
        raise UsageError("max_tries must be >= 1")

    outcomes: list[Outcome] = []
    for attempt in range(1, max_tries + 1):
        scratch = f"{log_path}.try{attempt}"
        outcome, ms = run_once(command, Mode.RECORD, time_limit_ms, log_path=scratch, cfg=cfg)
        outcomes.append(outcome)
        logger.info(f"Record try {attempt}/{max_tries}: {outcome.value} ({ms:.0f} ms)")

        if outcome is Outcome.EXPECTED and os.path.exists(scratch):
            os.replace(scratch, log_path)
            return CaptureResult(log_path, attempt, outcomes)

        _discard(scratch)

    logger.warning(f"No expected execution recorded after {max_tries} tries")
    return CaptureResult(None, max_tries, outcomes)


def stats(
        command: list[str],
        runs: int,
        mode: Mode,
        time_limit_ms: int,
        log: str | None = None,
        *,
        cfg: HarnessConfig | None = None,
    ) -> RunReport:
    """Run ``command`` ``runs`` times in ``mode`` and aggregate the outcomes.

    In record mode each run records to a scratch log whose size is reported
    and which is then deleted.

    Raises:
        UsageError: if ``runs`` is below 1 or replay is requested without a log.
        HarnessError: if the command cannot be started.
    """
    if runs < 1:
        raise UsageError("runs must be >= 1")
    if mode is Mode.REPLAY and not log:
        raise UsageError("--log is required in replay mode")
    if mode is Mode.REPLAY and not os.path.exists(log):
        raise UsageError(f"Log not found: {log}")

    report = RunReport(mode)
    scratch = f"{log or 'rr-stats.log'}.stats-{os.getpid()}"

    for index in range(1, runs + 1):
        if mode is Mode.RECORD:
            outcome, ms = run_once(command, mode, time_limit_ms, log_path=scratch, cfg=cfg)
            report.records.append(RunRecord(index, outcome, ms, _file_size(scratch)))
            _discard(scratch)
        else:
            outcome, ms = run_once(command, mode, time_limit_ms, log_path=log, cfg=cfg)
            report.records.append(RunRecord(index, outcome, ms))

    logger.info(report.summary_line())
    return report


def overhead(
        command: list[str],
        runs: int,
        time_limit_ms: int,
        *,
        cfg: HarnessConfig | None = None,
    ) -> OverheadReport:
    """Compare mean wall time of record runs against noop runs."""
    report = OverheadReport(
        noop=stats(command, runs, Mode.NOOP, time_limit_ms, cfg=cfg),
        record=stats(command, runs, Mode.RECORD, time_limit_ms, cfg=cfg),
    )
    if report.ratio > OVERHEAD_WARN_RATIO:
        logger.warning(f"Record overhead {report.ratio:.2f}x exceeds {OVERHEAD_WARN_RATIO:.0f}x")
    return report
