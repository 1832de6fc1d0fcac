"""Replay of a recorded log.

At every channel event the replayer looks up the entry for
(current DTI, logical time), checks that the program is doing the same
thing on the same channel, and forces the recorded outcome:

- a recorded Empty/Timeout/RecvError is returned without touching the channel;
- a recorded success is satisfied by :meth:`Replayer.rr_recv`, which waits for
  a message from the recorded sender and buffers messages from other senders.

A thread whose next event is not in the log parks until replay desyncs.
On the first divergence the replayer switches permanently to native
execution (or exits the process under the ``error`` policy), waking every
parked thread. Receivers drain their buffers before reading the channel
again.
"""

import os
import threading
import time

from typing import TYPE_CHECKING, Callable, Sequence

from . import ids
from .config import DesyncPolicy, RrConfig
from .errors import ChannelEmpty, DesyncError, Disconnected, RecvTimeout, SelectError
from .events import (
    RECEIVE_EVENTS, ChannelFlavor, DesyncKind, DesyncReason,
    Empty, EventType, LogEntry, RecordLog, RecvError,
    SelectedIndex, Success, Timeout, render_channels,
)
from .ids import NONE, DetChannelId, DetThreadId
from .logger import desync_logger, logger

if TYPE_CHECKING:
    from .channel import Envelope, Receiver


# Polling slice for blocking waits, bounds how late a desync is noticed
POLL_SLICE_S = 0.1
DESYNC_EXIT_STATUS = 3

Delivery = tuple[int, "Envelope"]



class Replayer:
    """Replay state of one process.

    Attributes:
        log: The recorded log being replayed.
        policy: Desync policy.
        timeout_s: How long :meth:`rr_recv` waits for the expected sender.
    """

    def __init__(
            self,
            log: RecordLog,
            policy: DesyncPolicy = DesyncPolicy.KEEP_GOING,
            desync_timeout_ms: int = 1000,
            exit_fn: Callable[[int], None] = os._exit,
        ) -> None:
        self.log = log
        self.policy = policy
        self.timeout_s = desync_timeout_ms / 1000
        self._exit = exit_fn

        self._desynced = False
        self._reason: DesyncReason | None = None
        self._cond = threading.Condition()
        # ident -> (dti, event id, channels) of threads parked at end of log
        self._parked: dict[int, tuple[DetThreadId, int, tuple[DetChannelId, ...]]] = {}
        self._monitor: threading.Thread | None = None


    @classmethod
    def from_config(cls, config: RrConfig, log: RecordLog) -> "Replayer":
        return cls(log, config.desync_policy, config.desync_timeout_ms)


    @property
    def desynced(self) -> bool:
        return self._desynced


    @property
    def reason(self) -> DesyncReason | None:
        return self._reason


    @property
    def parked(self) -> int:
        with self._cond:
            return len(self._parked)


    # ==================== LOG CONSULTATION ====================

    def expected_entry(self, event_id: int | None = None) -> LogEntry | None:
        """Return the log entry for the calling thread's logical time.

        Args:
            event_id: Logical time to look up, defaults to the caller's clock
                (which is not advanced).

        Returns:
            The entry, or ``None`` at end of log.
        """
        if event_id is None:
            event_id = ids.logical_time()
        return self.log.get(ids.current_dti(), event_id)


    @staticmethod
    def check_sync(
            entry: LogEntry,
            event_type: EventType,
            channels: tuple[DetChannelId, ...],
            flavor: ChannelFlavor,
        ) -> DesyncReason | None:
        """Compare an observed event against its log entry.

        Returns:
            ``None`` when event type, channel(s) and flavor all match,
            otherwise the reason of the first mismatch.
        """
        if entry.event_type != event_type:
            return DesyncReason(DesyncKind.EVENT_TYPE_MISMATCH)
        if entry.channels != channels:
            return DesyncReason(DesyncKind.CHANNEL_MISMATCH)
        if entry.flavor != flavor:
            return DesyncReason(DesyncKind.FLAVOR_MISMATCH)
        return None


    def _consult(
            self,
            event_type: EventType,
            channels: tuple[DetChannelId, ...],
            flavor: ChannelFlavor,
        ) -> tuple[int, LogEntry] | None:
        """Advance the caller's clock and fetch the synced entry for it.

        Parks at end of log. Returns ``None`` when the operation must run
        natively because replay is (or just became) desynced.
        """
        event_id = ids.tick()
        entry = self.expected_entry(event_id)

        if entry is None:
            self.block_at_end_of_log(event_id, channels)
            return None

        if (reason := self.check_sync(entry, event_type, channels, flavor)) is not None:
            self.enter_desync(reason, event_id=event_id, channels=channels)
            return None

        return event_id, entry


    # ==================== FORCING ====================

    def rr_recv(
            self,
            receiver: "Receiver",
            expected: DetThreadId,
            event_id: int | None = None,
        ) -> "Envelope | None":
        """Return the next message from ``expected`` on ``receiver``.

        The receiver's buffer is checked first. Otherwise the channel is read
        in short slices; messages from other senders are buffered in arrival
        order. Gives up with a ``TimeoutWaitingForSender`` desync when the
        sender does not deliver within the desync timeout, or at once when
        every sender is gone.

        Returns:
            The matching envelope, or ``None`` once replay is desynced.
        """
        if (envelope := receiver._take_buffered(expected)) is not None:
            return envelope

        deadline = time.monotonic() + self.timeout_s

        while not self._desynced:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break

            try:
                envelope = receiver._backend_get(min(POLL_SLICE_S, remaining))
            except RecvTimeout:
                continue
            except Disconnected:
                break

            if envelope.sender == expected:
                return envelope
            receiver._buffer_envelope(envelope)

        if not self._desynced:
            self.enter_desync(
                DesyncReason(DesyncKind.TIMEOUT_WAITING_FOR_SENDER, expected),
                event_id=event_id,
                channels=(receiver.channel_id,),
            )
        return None


    def dispatch(
            self,
            event_type: EventType,
            receivers: Sequence["Receiver"],
            flavor: ChannelFlavor,
            native: Callable[[], Delivery],
        ) -> Delivery:
        """Perform a receive-type event (receive variants or select) in replay.

        Args:
            event_type: The operation performed.
            receivers: The receiver, or the select set in index order.
            flavor: Flavor of the channels.
            native: Runs the operation natively, draining buffers first.

        Returns:
            ``(index, envelope)``; index is 0 for plain receives.

        Raises:
            ChannelEmpty, RecvTimeout, Disconnected, SelectError: when that
                outcome was recorded, or when the native fallback raises it.
        """
        if self._desynced:
            return native()

        channels = tuple(rx.channel_id for rx in receivers)
        consulted = self._consult(event_type, channels, flavor)
        if consulted is None:
            return native()
        event_id, entry = consulted
        status = entry.status

        if event_type in RECEIVE_EVENTS and isinstance(status, Success):
            envelope = self.rr_recv(receivers[0], status.sender, event_id)
            return (0, envelope) if envelope is not None else native()

        if event_type is EventType.SELECT and isinstance(status, SelectedIndex):
            if status.index >= len(receivers):
                self.enter_desync(
                    DesyncReason(DesyncKind.SELECT_INDEX_OUT_OF_RANGE),
                    event_id=event_id, channels=channels,
                )
                return native()
            envelope = self.rr_recv(receivers[status.index], status.sender, event_id)
            return (status.index, envelope) if envelope is not None else native()

        # Recorded failures are returned without touching the channel
        if event_type is EventType.TRY_RECV and isinstance(status, Empty):
            raise ChannelEmpty()
        if event_type is EventType.TIMEOUT_RECV and isinstance(status, Timeout):
            raise RecvTimeout()
        if isinstance(status, RecvError):
            if event_type is EventType.SELECT:
                raise SelectError()
            raise Disconnected()

        self.enter_desync(DesyncReason(DesyncKind.EVENT_TYPE_MISMATCH), event_id=event_id, channels=channels)
        return native()


    def on_send(self, channel: DetChannelId, flavor: ChannelFlavor) -> None:
        """Account for a send; sends are checked but never forced."""
        if self._desynced:
            return
        self._consult(EventType.SEND, (channel,), flavor)


    # ==================== END OF LOG / DESYNC ====================

    def block_at_end_of_log(self, event_id: int, channels: tuple[DetChannelId, ...] = ()) -> None:
        """Park the calling thread until replay desyncs.

        Under the ``error`` policy the process exits with an ``EndOfLog``
        report instead.
        """
        if self.policy is DesyncPolicy.ERROR_OUT:
            self.enter_desync(DesyncReason(DesyncKind.END_OF_LOG), event_id=event_id, channels=channels)
            return

        dti = ids.current_dti()
        ident = threading.get_ident()
        logger.debug(f"End of log at event {event_id}, parking")

        with self._cond:
            self._parked[ident] = (dti, event_id, channels)
            self._ensure_monitor()
            try:
                while not self._desynced:
                    self._cond.wait()
            finally:
                del self._parked[ident]


    def enter_desync(
            self,
            reason: DesyncReason,
            *,
            event_id: int | None = None,
            channels: tuple[DetChannelId, ...] = (),
            thread: DetThreadId | None = None,
        ) -> None:
        """Switch to native execution for the rest of the process.

        Idempotent: only the first call wakes parked threads and reports.

        Raises:
            DesyncError: under the ``error`` policy, only if the exit hook
                returns.
        """
        with self._cond:
            if self._desynced:
                return
            self._desynced = True
            self._reason = reason
            self._cond.notify_all()

        if thread is None:
            thread = ids.current_dti()
        desync_logger.warning(
            f"rr-desync: {reason} thread={thread} "
            f"event={'-' if event_id is None else event_id} "
            f"channel={render_channels(channels) if channels else '-'}"
        )

        if self.policy is DesyncPolicy.ERROR_OUT:
            logger.error(f"Replay desynchronized ({reason}), exiting")
            self._exit(DESYNC_EXIT_STATUS)
            raise DesyncError(str(reason))

        logger.info(f"Replay desynchronized ({reason}), continuing natively")


    def release_waiters(self) -> None:
        """Release parked threads at quiescence or process teardown."""
        with self._cond:
            if self._desynced or not self._parked:
                return
            _, (dti, event_id, channels) = min(self._parked.items(), key=lambda kv: kv[1][0].sort_key())

        self.enter_desync(
            DesyncReason(DesyncKind.QUIESCENT_AT_END_OF_LOG),
            event_id=event_id, channels=channels, thread=dti,
        )


    def _quiescent(self) -> bool:
        """True when no live managed thread can still make progress.

        A live raw thread whose next shared-clock event is still in the log
        counts as progress. Holds the condition lock.
        """
        if not self._parked:
            return False
        if ids.live_unmanaged() and self.log.get(NONE, ids.unmanaged_clock()) is not None:
            return False
        if not threading.main_thread().is_alive():
            return True
        return all(
            ident in self._parked or ids.is_joining(ident)
            for ident in ids.live_participants()
        )


    def _ensure_monitor(self) -> None:
        """Start the quiescence monitor. Holds the condition lock."""
        if self._monitor is not None:
            return
        self._monitor = threading.Thread(target=self._watch, name="rr-quiescence", daemon=True)
        self._monitor.start()


    def _watch(self) -> None:
        while True:
            with self._cond:
                if self._desynced:
                    return
                quiescent = self._quiescent()
                if not quiescent:
                    self._cond.wait(POLL_SLICE_S)
                    continue
            self.release_waiters()
