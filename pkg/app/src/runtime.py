"""Process-global record/replay runtime.

The runtime is created on the first channel operation from
:meth:`RrConfig.from_env` and stays fixed for the life of the process. At
interpreter exit it flushes the record log (record mode) or releases threads
parked at end of log (replay mode).

:func:`session` installs a runtime explicitly, for embedding several
record/replay sessions in one long-lived process such as a test run.
"""

import atexit
import os
import threading

from contextlib import contextmanager
from typing import Callable, Iterator

from . import ids
from .codec import deserialize_log
from .config import Mode, RrConfig
from .events import RecordLog
from .logger import logger
from .record import Recorder
from .replay import Replayer



class Runtime:

    def __init__(
            self,
            config: RrConfig,
            log: RecordLog | None = None,
            exit_fn: Callable[[int], None] = os._exit,
        ) -> None:
        """Initialize the runtime.

        Args:
            config: Mode and replay settings.
            log: Log to replay; read from ``config.record_file`` when omitted.
            exit_fn: Called with the exit status when replay errors out.

        Raises:
            FileNotFoundError: in replay mode, if the log file does not exist.
            LogFormatError: in replay mode, if the log cannot be parsed.
        """
        self.config = config
        self.exit_fn = exit_fn
        self.recorder: Recorder | None = None
        self.replayer: Replayer | None = None

        if config.mode is Mode.RECORD:
            self.recorder = Recorder()

        elif config.mode is Mode.REPLAY:
            if log is None:
                log = deserialize_log(config.record_file)
            self.replayer = Replayer(log, config.desync_policy, config.desync_timeout_ms, exit_fn)
            logger.info(f"Replaying {len(log)} channel events from {config.record_file}")


    @property
    def mode(self) -> Mode:
        return self.config.mode


    def shutdown(self) -> None:
        """Flush the record log or release parked replay threads."""
        try:
            if self.recorder is not None and self.config.record_file:
                self.recorder.flush(self.config.record_file)
            if self.replayer is not None:
                self.replayer.release_waiters()
        except Exception as e:
            logger.error(f"Record/replay teardown failed: {e}")



_current: Runtime | None = None
_lock = threading.Lock()


def get_runtime() -> Runtime:
    """Return the process runtime, creating it from the environment on first use."""
    global _current

    runtime = _current
    if runtime is not None:
        return runtime

    with _lock:
        if _current is None:
            _current = Runtime(RrConfig.from_env())
            atexit.register(_current.shutdown)
            if _current.mode is not Mode.NOOP:
                logger.info(f"Channels running in {_current.mode.value} mode")
        return _current


def install(runtime: Runtime | None) -> Runtime | None:
    """Replace the process runtime, returning the previous one."""
    global _current

    with _lock:
        previous = _current
        _current = runtime
    return previous


@contextmanager
def session(
        config: RrConfig,
        log: RecordLog | None = None,
        exit_fn: Callable[[int], None] = os._exit,
    ) -> Iterator[Runtime]:
    """Run a block under its own runtime.

    The calling thread's id counters and logical clock are reset on entry
    and exit. Teardown hooks are not run; call :meth:`Runtime.shutdown`
    when needed.
    """
    runtime = Runtime(config, log, exit_fn)
    ids.reset_thread_state()
    previous = install(runtime)
    try:
        yield runtime
    finally:
        install(previous)
        ids.reset_thread_state()
