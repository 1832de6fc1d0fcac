"""Deterministic thread and channel identifiers.

Every thread started through :func:`spawn_managed` gets a deterministic
thread id (DTI): the path of child indices from the main thread down to it.
The main thread is ``[]``, its first child ``[1]``, the second child of
``[1, 1]`` is ``[1, 1, 2]``. Threads created any other way get ``NONE``.

Channels get a deterministic channel id (DCI): the creating thread's DTI
plus a per-thread counter starting at 1.

All counters live in thread-local state, so assignment never reads another
thread's state and is race free even when spawning is racy.
"""

import threading
import weakref

from dataclasses import dataclass, field
from typing import Any, Callable

from .logger import logger



@dataclass(frozen=True)
class DetThreadId:
    """Deterministic thread id.

    Attributes:
        path: Child indices from the main thread, or ``None`` for unmanaged threads.
    """

    path: tuple[int, ...] | None

    def __post_init__(self) -> None:
        if self.path is not None and any(index < 1 for index in self.path):
            raise ValueError(f"Child indices must be >= 1: {self.path}")

    @property
    def is_none(self) -> bool:
        return self.path is None

    @property
    def depth(self) -> int:
        return 0 if self.path is None else len(self.path)

    def child(self, index: int) -> "DetThreadId":
        if self.path is None:
            return self
        return DetThreadId(self.path + (index,))

    def parent(self) -> "DetThreadId | None":
        if not self.path:
            return None
        return DetThreadId(self.path[:-1])

    def sort_key(self) -> tuple:
        # NONE sorts after every managed thread
        return (1, ()) if self.path is None else (0, self.path)

    def __lt__(self, other: "DetThreadId") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        if self.path is None:
            return "NONE"
        return "[" + ",".join(str(index) for index in self.path) + "]"


ROOT = DetThreadId(())
NONE = DetThreadId(None)



@dataclass(frozen=True)
class DetChannelId:
    """Deterministic channel id shared by a sender/receiver pair.

    Attributes:
        creator: DTI of the thread that created the channel.
        seq: Per-creator counter, 1 for the first channel.
    """

    creator: DetThreadId
    seq: int

    def sort_key(self) -> tuple:
        return (self.creator.sort_key(), self.seq)

    def __lt__(self, other: "DetChannelId") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"({self.creator},{self.seq})"



@dataclass
class _ThreadState:
    """Per-thread counters (the spawn counter of a thread)."""

    dti: DetThreadId
    children_spawned: int = 0
    channels_created: int = 0
    event_id: int = 0


_local = threading.local()

# Unmanaged threads share one logical clock
_none_clock_lock = threading.Lock()
_none_clock = 0

_managed: "weakref.WeakSet[DetThread]" = weakref.WeakSet()
# Raw threads that have performed a channel event
_unmanaged: "weakref.WeakSet[threading.Thread]" = weakref.WeakSet()
_joining: set[int] = set()
_registry_lock = threading.Lock()


def _state() -> _ThreadState:
    state = getattr(_local, "state", None)
    if state is None:
        dti = ROOT if threading.current_thread() is threading.main_thread() else NONE
        state = _ThreadState(dti)
        _local.state = state
    return state



class DetThread(threading.Thread):
    """A thread carrying a deterministic thread id.

    The id is fixed by the parent before the thread starts and installed in
    the child's thread-local state before ``target`` runs.
    """

    def __init__(
            self,
            dti: DetThreadId,
            target: Callable[..., Any],
            args: tuple = (),
            kwargs: dict[str, Any] | None = None,
            name: str | None = None,
            daemon: bool | None = None,
        ) -> None:
        super().__init__(
            target=target,
            args=args,
            kwargs=kwargs,
            name=name or f"rr-{dti}",
            daemon=daemon,
        )
        self.dti = dti


    def run(self) -> None:
        _local.state = _ThreadState(self.dti)
        super().run()


    def join(self, timeout: float | None = None) -> None:
        """Join the thread, marking the caller as blocked on a join meanwhile.

        Replay uses the mark to tell a thread waiting on a parked child
        apart from one doing work.
        """
        ident = threading.get_ident()
        with _registry_lock:
            _joining.add(ident)
        try:
            super().join(timeout)
        finally:
            with _registry_lock:
                _joining.discard(ident)



def spawn_managed(
        target: Callable[..., Any],
        *args: Any,
        name: str | None = None,
        daemon: bool | None = None,
        **kwargs: Any,
    ) -> DetThread:
    """Start ``target`` on a new thread with a deterministic thread id.

    The child's DTI is the caller's DTI extended with the caller's spawn
    counter after increment, so the first child of ``[]`` is ``[1]``.
    Children of unmanaged threads are unmanaged as well.

    Args:
        target: Thread body.
        *args: Positional arguments for ``target``.
        name: Optional thread name, defaults to ``rr-<dti>``.
        daemon: Daemon flag passed to :class:`threading.Thread`.
        **kwargs: Keyword arguments for ``target``.

    Returns:
        The started :class:`DetThread`.

    Raises:
        RuntimeError: if the thread cannot be started; the caller's spawn
            counter is left unchanged.
    """
    parent = _state()

    if parent.dti.is_none:
        logger.warning("spawn_managed called from an unmanaged thread, child gets a NONE id")
        thread = DetThread(NONE, target, args, kwargs, name, daemon)
        thread.start()
        return thread

    parent.children_spawned += 1
    dti = parent.dti.child(parent.children_spawned)
    thread = DetThread(dti, target, args, kwargs, name, daemon)

    try:
        with _registry_lock:
            _managed.add(thread)
        thread.start()
    except BaseException:
        parent.children_spawned -= 1
        with _registry_lock:
            _managed.discard(thread)
        raise

    logger.debug(f"Spawned thread {dti}")
    return thread


def current_dti() -> DetThreadId:
    """Return the calling thread's DTI, ``NONE`` for unmanaged threads."""
    return _state().dti


def next_channel_id() -> DetChannelId:
    """Return a fresh channel id for a channel created by the calling thread."""
    state = _state()
    state.channels_created += 1
    return DetChannelId(state.dti, state.channels_created)


def logical_time() -> int:
    """Return the calling thread's logical clock without advancing it."""
    state = _state()
    if state.dti.is_none:
        with _none_clock_lock:
            return _none_clock
    return state.event_id


def tick() -> int:
    """Return the calling thread's logical clock and advance it by one.

    Unmanaged threads share a single synchronized clock.
    """
    global _none_clock

    state = _state()
    if state.dti.is_none:
        with _none_clock_lock:
            event_id = _none_clock
            _none_clock += 1
        with _registry_lock:
            _unmanaged.add(threading.current_thread())
        return event_id

    event_id = state.event_id
    state.event_id += 1
    return event_id


def reset_thread_state() -> None:
    """Reset the calling thread's counters and the shared unmanaged clock.

    Used when a new record/replay session starts in a long-lived process.
    """
    global _none_clock

    _local.state = None
    with _none_clock_lock:
        _none_clock = 0


def live_participants() -> set[int]:
    """Return thread idents of the live main thread and live managed threads."""
    with _registry_lock:
        threads = [t for t in _managed if t.is_alive()]

    idents = {t.ident for t in threads if t.ident is not None}
    main = threading.main_thread()
    if main.is_alive() and main.ident is not None:
        idents.add(main.ident)
    return idents


def unmanaged_clock() -> int:
    """Return the shared unmanaged clock without advancing it."""
    with _none_clock_lock:
        return _none_clock


def live_unmanaged() -> int:
    """Return how many raw threads that performed a channel event are still alive."""
    with _registry_lock:
        return sum(1 for t in _unmanaged if t.is_alive())


def is_joining(ident: int) -> bool:
    with _registry_lock:
        return ident in _joining
