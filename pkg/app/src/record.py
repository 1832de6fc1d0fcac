"""In-memory event recorder.

Each managed thread appends to its own segment; unmanaged threads share one
locked segment with a shared logical clock. Segments are merged into a
:class:`RecordLog` when the log is flushed at process teardown.
"""

import threading

from . import ids
from .codec import serialize_log
from .events import ChannelFlavor, EventStatus, EventType, LogEntry, RecordLog
from .ids import DetChannelId
from .logger import logger



class Recorder:

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._local = threading.local()
        self._segments: list[list[LogEntry]] = []
        self._none_segment: list[LogEntry] = []


    def record_event(
            self,
            event_type: EventType,
            flavor: ChannelFlavor,
            data_type: str,
            status: EventStatus,
            channels: tuple[DetChannelId, ...],
        ) -> LogEntry:
        """Append an entry for the calling thread's next logical time.

        Returns:
            The appended entry.
        """
        dti = ids.current_dti()

        if dti.is_none:
            with self._lock:
                entry = LogEntry(dti, ids.tick(), event_type, flavor, data_type, status, channels)
                self._none_segment.append(entry)
            return entry

        entry = LogEntry(dti, ids.tick(), event_type, flavor, data_type, status, channels)
        self._segment().append(entry)
        return entry


    def snapshot(self) -> RecordLog:
        """Merge all thread segments into a log."""
        log = RecordLog()
        with self._lock:
            segments = [list(segment) for segment in self._segments]
            segments.append(list(self._none_segment))

        for segment in segments:
            for entry in segment:
                log.add(entry)
        return log


    def flush(self, path: str) -> int:
        """Serialize the recorded events to ``path``.

        Returns:
            Number of bytes written.

        Raises:
            LogIOError: if the file cannot be written.
        """
        log = self.snapshot()
        size = serialize_log(log, path)
        logger.info(f"Recorded {len(log)} channel events to {path} ({size} bytes)")
        return size


    def _segment(self) -> list[LogEntry]:
        segment = getattr(self._local, "segment", None)
        if segment is None:
            segment = []
            self._local.segment = segment
            with self._lock:
                self._segments.append(segment)
        return segment
