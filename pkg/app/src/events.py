"""Record log data model.

A record log holds one :class:`LogEntry` per channel event, keyed by the
performing thread's DTI and its logical clock at the event. No payload data
is ever stored.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import ClassVar, Iterator

from .errors import DuplicateEntry
from .ids import DetChannelId, DetThreadId



class EventType(IntEnum):
    SEND = 0
    RECV = 1
    TRY_RECV = 2
    TIMEOUT_RECV = 3
    SELECT = 4

    def __str__(self) -> str:
        return _EVENT_TYPE_NAMES[self]


_EVENT_TYPE_NAMES = {
    EventType.SEND: "Send",
    EventType.RECV: "Recv",
    EventType.TRY_RECV: "TryRecv",
    EventType.TIMEOUT_RECV: "TimeoutRecv",
    EventType.SELECT: "Select",
}

RECEIVE_EVENTS = frozenset({EventType.RECV, EventType.TRY_RECV, EventType.TIMEOUT_RECV})


class ChannelFlavor(IntEnum):
    """Channel variant. Only ``LOCAL_UNBOUNDED`` channels can be created;
    the reserved tags exist so logs carrying them still parse."""

    LOCAL_UNBOUNDED = 0
    RESERVED_IPC = 1
    RESERVED_BOUNDED = 2

    def __str__(self) -> str:
        return self.name



# ==================== EVENT STATUS ====================

@dataclass(frozen=True)
class EventStatus:
    """Return variant of a channel event."""

    tag: ClassVar[int]


@dataclass(frozen=True)
class SendOk(EventStatus):
    tag: ClassVar[int] = 0

    def __str__(self) -> str:
        return "SendOk"


@dataclass(frozen=True)
class Success(EventStatus):
    tag: ClassVar[int] = 1
    sender: DetThreadId

    def __str__(self) -> str:
        return f"Success({self.sender})"


@dataclass(frozen=True)
class Empty(EventStatus):
    tag: ClassVar[int] = 2

    def __str__(self) -> str:
        return "Empty"


@dataclass(frozen=True)
class Timeout(EventStatus):
    tag: ClassVar[int] = 3

    def __str__(self) -> str:
        return "Timeout"


@dataclass(frozen=True)
class RecvError(EventStatus):
    """Disconnected channel. Also logged for a send to a closed receiver."""

    tag: ClassVar[int] = 4

    def __str__(self) -> str:
        return "RecvError"


@dataclass(frozen=True)
class SelectedIndex(EventStatus):
    tag: ClassVar[int] = 5
    index: int
    sender: DetThreadId

    def __str__(self) -> str:
        return f"SelectedIndex({self.index},{self.sender})"


SEND_OK = SendOk()
EMPTY = Empty()
TIMEOUT = Timeout()
RECV_ERROR = RecvError()


_COMPATIBLE: dict[EventType, tuple[type[EventStatus], ...]] = {
    EventType.SEND: (SendOk, RecvError),
    EventType.RECV: (Success, RecvError),
    EventType.TRY_RECV: (Success, Empty, RecvError),
    EventType.TIMEOUT_RECV: (Success, Timeout, RecvError),
    EventType.SELECT: (SelectedIndex, RecvError),
}


def is_compatible(event_type: EventType, status: EventStatus) -> bool:
    """Return True when ``status`` is a possible outcome of ``event_type``."""
    return isinstance(status, _COMPATIBLE[event_type])



# ==================== LOG ====================

def render_channels(channels: tuple[DetChannelId, ...]) -> str:
    """Render one DCI as ``([],1)`` and several as ``[([],1),([],2)]``."""
    if len(channels) == 1:
        return str(channels[0])
    return "[" + ",".join(str(c) for c in channels) + "]"


@dataclass(frozen=True)
class LogEntry:
    """One recorded channel event.

    Attributes:
        thread: DTI of the thread performing the event.
        event_id: Logical time of the event on that thread, from 0.
        event_type: Kind of channel operation.
        flavor: Channel variant.
        data_type: Name of the payload type given at channel creation.
        status: Outcome of the operation.
        channels: DCI of the channel, or the select set's DCIs in index order.
    """

    thread: DetThreadId
    event_id: int
    event_type: EventType
    flavor: ChannelFlavor
    data_type: str
    status: EventStatus
    channels: tuple[DetChannelId, ...]

    @property
    def key(self) -> tuple[DetThreadId, int]:
        return (self.thread, self.event_id)

    def sort_key(self) -> tuple:
        return (self.thread.sort_key(), self.event_id)

    def __str__(self) -> str:
        return (
            f"{self.thread} {self.event_id} {self.event_type} {self.flavor} "
            f"{self.data_type} {self.status} ch={render_channels(self.channels)}"
        )


@dataclass
class RecordLog:
    """All recorded events of one execution keyed by (thread, event id)."""

    entries: dict[tuple[DetThreadId, int], LogEntry] = field(default_factory=dict)


    def add(self, entry: LogEntry) -> None:
        """Add an entry.

        Raises:
            DuplicateEntry: if an entry with the same key exists.
        """
        if entry.key in self.entries:
            raise DuplicateEntry(f"Duplicate log entry for thread {entry.thread} event {entry.event_id}")
        self.entries[entry.key] = entry


    def get(self, thread: DetThreadId, event_id: int) -> LogEntry | None:
        return self.entries.get((thread, event_id))


    def sorted_entries(self) -> list[LogEntry]:
        """Return entries sorted by thread path, then event id."""
        return sorted(self.entries.values(), key=LogEntry.sort_key)


    def threads(self) -> list[DetThreadId]:
        return sorted({thread for thread, _ in self.entries})


    def __len__(self) -> int:
        return len(self.entries)


    def __iter__(self) -> Iterator[LogEntry]:
        return iter(self.sorted_entries())



# ==================== DESYNC ====================

class DesyncKind(Enum):
    EVENT_TYPE_MISMATCH = "EventTypeMismatch"
    CHANNEL_MISMATCH = "ChannelMismatch"
    FLAVOR_MISMATCH = "FlavorMismatch"
    TIMEOUT_WAITING_FOR_SENDER = "TimeoutWaitingForSender"
    END_OF_LOG = "EndOfLog"
    SELECT_INDEX_OUT_OF_RANGE = "SelectIndexOutOfRange"
    QUIESCENT_AT_END_OF_LOG = "QuiescentAtEndOfLog"


@dataclass(frozen=True)
class DesyncReason:
    """Why replay stopped following the log.

    Attributes:
        kind: Reason category.
        expected: Expected sender, only for ``TIMEOUT_WAITING_FOR_SENDER``.
    """

    kind: DesyncKind
    expected: DetThreadId | None = None

    def __str__(self) -> str:
        if self.expected is not None:
            return f"{self.kind.value}(expected={self.expected})"
        return self.kind.value
