"""Record/replay aware unbounded MPSC channels.

:func:`make_channel` returns a cloneable :class:`Sender` and a single-owner
:class:`Receiver`. Every message travels in an :class:`Envelope` tagged
with the sending thread's DTI, in every mode. Operations behave like a
plain unbounded channel in noop mode, are logged in record mode and are
forced to the logged outcome in replay mode.

Closing handles stands in for dropping them: once every sender is closed
and the channel is drained, receives raise :class:`Disconnected`; once the
receiver is closed, sends raise :class:`SendError`.
"""

import random
import threading
import time

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Generic, Iterable, Iterator, TypeVar

from . import ids
from .codec import MAX_FIELD_LEN
from .config import Mode
from .errors import ChannelEmpty, Disconnected, RecvTimeout, SelectError, SendError
from .events import (
    EMPTY, RECV_ERROR, SEND_OK, TIMEOUT,
    ChannelFlavor, EventStatus, EventType,
    SelectedIndex, Success,
)
from .ids import DetChannelId, DetThreadId
from .logger import logger
from .runtime import get_runtime


T = TypeVar("T")



@dataclass(frozen=True)
class Envelope(Generic[T]):
    """A message tagged with the DTI of the thread that sent it."""

    sender: DetThreadId
    payload: T



class _Core:
    """Shared queue of one channel: the underlying unbounded channel."""

    def __init__(self) -> None:
        self._items: deque[Envelope] = deque()
        self._cond = threading.Condition()
        self._senders = 1
        self._receiver_open = True
        self._watchers: set[threading.Event] = set()
        self._unmanaged_senders: set[int] = set()
        self._warned_unmanaged = False


    def put(self, envelope: Envelope) -> None:
        with self._cond:
            if not self._receiver_open:
                raise SendError("Receiver closed")
            self._items.append(envelope)
            self._cond.notify()
            self._wake_watchers()


    def get(self, timeout: float | None) -> Envelope:
        """Blocking get; ``None`` waits forever."""
        with self._cond:
            self._cond.wait_for(lambda: self._items or self._senders == 0, timeout)
            if self._items:
                return self._items.popleft()
            if self._senders == 0:
                raise Disconnected()
            raise RecvTimeout()


    def get_nowait(self) -> Envelope:
        with self._cond:
            if self._items:
                return self._items.popleft()
            if self._senders == 0:
                raise Disconnected()
            raise ChannelEmpty()


    def pending(self) -> bool:
        with self._cond:
            return bool(self._items)


    def disconnected(self) -> bool:
        with self._cond:
            return not self._items and self._senders == 0


    def add_sender(self) -> None:
        with self._cond:
            self._senders += 1


    def drop_sender(self) -> None:
        with self._cond:
            self._senders -= 1
            if self._senders == 0:
                self._cond.notify_all()
                self._wake_watchers()


    def close_receiver(self) -> None:
        with self._cond:
            self._receiver_open = False
            self._items.clear()


    def watch(self, event: threading.Event) -> None:
        with self._cond:
            self._watchers.add(event)


    def unwatch(self, event: threading.Event) -> None:
        with self._cond:
            self._watchers.discard(event)


    def note_unmanaged_sender(self) -> bool:
        """Track an unmanaged sending thread.

        Returns:
            True exactly once, when a second distinct unmanaged thread sends.
        """
        with self._cond:
            self._unmanaged_senders.add(threading.get_ident())
            if len(self._unmanaged_senders) > 1 and not self._warned_unmanaged:
                self._warned_unmanaged = True
                return True
            return False


    def _wake_watchers(self) -> None:
        for event in self._watchers:
            event.set()



def _type_name(data_type: type | str | None) -> str:
    if data_type is None:
        return "object"
    if isinstance(data_type, str):
        return data_type
    return data_type.__name__


def _status_of(error: Exception) -> EventStatus:
    if isinstance(error, ChannelEmpty):
        return EMPTY
    if isinstance(error, RecvTimeout):
        return TIMEOUT
    return RECV_ERROR



class Sender(Generic[T]):
    """Sending end of a channel. Clone it to send from several threads."""

    def __init__(self, core: _Core, channel_id: DetChannelId, data_type: str) -> None:
        self._core = core
        self._closed = False
        self.channel_id = channel_id
        self.data_type = data_type
        self.flavor = ChannelFlavor.LOCAL_UNBOUNDED


    def send(self, payload: T) -> None:
        """Enqueue ``payload``; never blocks.

        Raises:
            SendError: if the receiver is closed or this handle was closed.
        """
        if self._closed:
            raise SendError("Sender closed")

        sender = ids.current_dti()
        if sender.is_none and self._core.note_unmanaged_sender():
            logger.warning(
                f"Two unmanaged threads send on channel {self.channel_id}; "
                f"their messages cannot be told apart during replay"
            )

        runtime = get_runtime()
        if runtime.replayer is not None:
            runtime.replayer.on_send(self.channel_id, self.flavor)

        try:
            self._core.put(Envelope(sender, payload))
        except SendError:
            if runtime.recorder is not None:
                runtime.recorder.record_event(
                    EventType.SEND, self.flavor, self.data_type, RECV_ERROR, (self.channel_id,)
                )
            raise

        if runtime.recorder is not None:
            runtime.recorder.record_event(
                EventType.SEND, self.flavor, self.data_type, SEND_OK, (self.channel_id,)
            )


    def clone(self) -> "Sender[T]":
        """Return another sender for the same channel."""
        if self._closed:
            raise SendError("Sender closed")
        self._core.add_sender()
        return Sender(self._core, self.channel_id, self.data_type)


    def close(self) -> None:
        """Close this handle. Closing twice is a no-op."""
        if self._closed:
            return
        self._closed = True
        self._core.drop_sender()


    def __enter__(self) -> "Sender[T]":
        return self


    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


    def __repr__(self) -> str:
        return f"<Sender {self.channel_id} {self.data_type}>"



class Receiver(Generic[T]):
    """Receiving end of a channel. Owned by one thread at a time."""

    def __init__(self, core: _Core, channel_id: DetChannelId, data_type: str) -> None:
        self._core = core
        # Replay buffer, in arrival order across senders
        self._buffer: deque[Envelope] = deque()
        self.channel_id = channel_id
        self.data_type = data_type
        self.flavor = ChannelFlavor.LOCAL_UNBOUNDED


    def receive(self) -> T:
        """Block until a message arrives.

        Raises:
            Disconnected: when every sender is closed and the channel is empty.
        """
        return self._perform(EventType.RECV, lambda: self._core.get(None)).payload


    def try_receive(self) -> T:
        """Return a message if one is available.

        Raises:
            ChannelEmpty: when no message is available.
            Disconnected: when every sender is closed and the channel is empty.
        """
        return self._perform(EventType.TRY_RECV, self._core.get_nowait).payload


    def timeout_receive(self, timeout: float) -> T:
        """Block until a message arrives or ``timeout`` seconds elapse.

        Raises:
            RecvTimeout: when the timeout elapses.
            Disconnected: when every sender is closed and the channel is empty.
        """
        return self._perform(EventType.TIMEOUT_RECV, lambda: self._core.get(timeout)).payload


    def close(self) -> None:
        """Close the receiver; later sends fail and queued messages are dropped."""
        self._core.close_receiver()
        self._buffer.clear()


    @property
    def buffered(self) -> int:
        """Number of envelopes held back by replay."""
        return len(self._buffer)


    def __iter__(self) -> Iterator[T]:
        """Yield messages until the channel disconnects."""
        while True:
            try:
                yield self.receive()
            except Disconnected:
                return


    def __enter__(self) -> "Receiver[T]":
        return self


    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


    def __repr__(self) -> str:
        return f"<Receiver {self.channel_id} {self.data_type}>"


    def _perform(self, event_type: EventType, native: Callable[[], Envelope]) -> Envelope:
        runtime = get_runtime()

        if runtime.mode is Mode.NOOP:
            return native()

        if runtime.recorder is not None:
            try:
                envelope = native()
            except (ChannelEmpty, RecvTimeout, Disconnected) as e:
                runtime.recorder.record_event(
                    event_type, self.flavor, self.data_type, _status_of(e), (self.channel_id,)
                )
                raise
            runtime.recorder.record_event(
                event_type, self.flavor, self.data_type, Success(envelope.sender), (self.channel_id,)
            )
            return envelope

        _, envelope = runtime.replayer.dispatch(
            event_type, [self], self.flavor, lambda: (0, self._drain_or(native))
        )
        return envelope


    # ---- replay hooks ----

    def _drain_or(self, native: Callable[[], Envelope]) -> Envelope:
        if self._buffer:
            return self._buffer.popleft()
        return native()


    def _take_buffered(self, sender: DetThreadId) -> Envelope | None:
        """Remove and return the oldest buffered envelope from ``sender``."""
        for i, envelope in enumerate(self._buffer):
            if envelope.sender == sender:
                del self._buffer[i]
                return envelope
        return None


    def _buffer_envelope(self, envelope: Envelope) -> None:
        self._buffer.append(envelope)


    def _backend_get(self, timeout: float) -> Envelope:
        return self._core.get(timeout)



def make_channel(data_type: type | str | None = None) -> tuple[Sender, Receiver]:
    """Create an unbounded MPSC channel.

    Args:
        data_type: Payload type or type name recorded in the log.

    Returns:
        ``(sender, receiver)`` sharing a freshly assigned channel id.

    Raises:
        ValueError: if the type name is too long to be recorded.
    """
    name = _type_name(data_type)
    if len(name.encode("utf-8")) > MAX_FIELD_LEN:
        raise ValueError(f"Data type name longer than {MAX_FIELD_LEN} bytes")
    channel_id = ids.next_channel_id()
    core = _Core()
    return Sender(core, channel_id, name), Receiver(core, channel_id, name)



class SelectSet:
    """Ordered set of receivers for :func:`select`.

    A receiver's index is its insertion position.
    """

    def __init__(self, receivers: Iterable[Receiver] = ()) -> None:
        self._receivers: list[Receiver] = []
        for receiver in receivers:
            self.add(receiver)


    def add(self, receiver: Receiver) -> int:
        """Add a receiver and return its index."""
        if len(self._receivers) >= MAX_FIELD_LEN:
            raise ValueError(f"A select set holds at most {MAX_FIELD_LEN} receivers")
        if any(r is receiver for r in self._receivers):
            raise ValueError(f"{receiver} is already in the select set")
        self._receivers.append(receiver)
        return len(self._receivers) - 1


    def select(self) -> tuple[int, Any]:
        return select(self)


    @property
    def channel_ids(self) -> tuple[DetChannelId, ...]:
        return tuple(r.channel_id for r in self._receivers)


    def __len__(self) -> int:
        return len(self._receivers)


    def __getitem__(self, index: int) -> Receiver:
        return self._receivers[index]


    def __iter__(self) -> Iterator[Receiver]:
        return iter(self._receivers)



def _native_select(receivers: list[Receiver], drain: bool) -> tuple[int, Envelope]:
    """Wait until some receiver has a message and take it.

    Among several ready receivers one is picked at random. With ``drain``,
    receivers holding replay-buffered envelopes are served first.

    Raises:
        SelectError: when every receiver is disconnected.
    """
    if drain:
        for index, receiver in enumerate(receivers):
            if receiver._buffer:
                return index, receiver._buffer.popleft()

    event = threading.Event()
    for receiver in receivers:
        receiver._core.watch(event)

    try:
        while True:
            event.clear()

            ready = [i for i, r in enumerate(receivers) if r._core.pending()]
            if ready:
                index = random.choice(ready)
                try:
                    return index, receivers[index]._core.get_nowait()
                except (ChannelEmpty, Disconnected):
                    continue

            if all(r._core.disconnected() for r in receivers):
                raise SelectError("All receivers disconnected")

            event.wait()
    finally:
        for receiver in receivers:
            receiver._core.unwatch(event)


def select(select_set: SelectSet) -> tuple[int, Any]:
    """Block until one receiver in the set has a message.

    Returns:
        ``(index, payload)`` of the receiver that delivered.

    Raises:
        SelectError: when every receiver in the set is disconnected.
        ValueError: when the set is empty.
    """
    receivers = list(select_set)
    if not receivers:
        raise ValueError("Cannot select on an empty set")

    runtime = get_runtime()
    flavor = receivers[0].flavor

    if runtime.mode is Mode.NOOP:
        index, envelope = _native_select(receivers, drain=False)
        return index, envelope.payload

    if runtime.recorder is not None:
        try:
            index, envelope = _native_select(receivers, drain=False)
        except SelectError:
            runtime.recorder.record_event(
                EventType.SELECT, flavor, receivers[0].data_type, RECV_ERROR, select_set.channel_ids
            )
            raise
        runtime.recorder.record_event(
            EventType.SELECT, flavor, receivers[0].data_type,
            SelectedIndex(index, envelope.sender), select_set.channel_ids,
        )
        return index, envelope.payload

    index, envelope = runtime.replayer.dispatch(
        EventType.SELECT, receivers, flavor, lambda: _native_select(receivers, drain=True)
    )
    return index, envelope.payload
