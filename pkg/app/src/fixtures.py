"""Small concurrent programs with controlled nondeterminism.

Each fixture runs in the current process under whatever channel mode the
environment selects and returns its exit status: 0 on the expected
interleaving, 1 otherwise. Flaky fixtures get their flakiness from short
random start jitters rather than bare scheduler races.
"""

import random
import threading
import time

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import ids
from .channel import SelectSet, make_channel
from .errors import ChannelEmpty, Disconnected
from .logger import logger


JITTER_MAX_S = 0.005
DEFAULT_MESSAGES = 1000
DEFAULT_BULK_MESSAGES = 10_000
DEFAULT_PAYLOAD_BYTES = 8



class NondeterminismClass(str, Enum):
    NONE = "none"
    ARRIVAL_ORDER = "arrival_order"
    SELECT_READINESS = "select_readiness"
    EXIT_RACE = "exit_race"
    EXTERNAL = "external"
    UNMANAGED_THREAD = "unmanaged_thread"



@dataclass(frozen=True)
class FixtureOptions:
    messages: int | None = None
    payload_bytes: int = DEFAULT_PAYLOAD_BYTES



@dataclass(frozen=True)
class Fixture:
    """A catalog entry.

    Attributes:
        name: Name used on the command line.
        nd_class: Source of nondeterminism.
        description: One-line summary.
        flaky: Whether native runs are expected to change outcome.
        body: Runs the fixture and returns its exit status.
        expected_status: Exit status of the expected interleaving.
    """

    name: str
    nd_class: NondeterminismClass
    description: str
    flaky: bool
    body: Callable[[FixtureOptions], int]
    expected_status: int = 0


    def run(self, options: FixtureOptions | None = None) -> int:
        return self.body(options or FixtureOptions())



CATALOG: dict[str, Fixture] = {}


def fixture(name: str, nd_class: NondeterminismClass, description: str, flaky: bool = False):
    """Register the decorated function in :data:`CATALOG`."""

    def register(body: Callable[[FixtureOptions], int]) -> Callable[[FixtureOptions], int]:
        if name in CATALOG:
            raise ValueError(f"Tried to register fixture {name} but it already exists")
        CATALOG[name] = Fixture(name, nd_class, description, flaky, body)
        return body

    return register


def run_fixture(name: str, options: FixtureOptions | None = None) -> int:
    """Run a fixture by name.

    Raises:
        KeyError: if no fixture has that name.
    """
    if name not in CATALOG:
        raise KeyError(f"Unknown fixture '{name}'")
    return CATALOG[name].run(options)


def catalog_lines() -> list[str]:
    return [
        f"{f.name:<10} {f.nd_class.value:<17} {'flaky' if f.flaky else 'stable':<7} {f.description}"
        for f in CATALOG.values()
    ]


def _jitter() -> None:
    time.sleep(random.uniform(0, JITTER_MAX_S))



@fixture("race2", NondeterminismClass.ARRIVAL_ORDER,
         "two producers race into one channel, [1] must arrive first", flaky=True)
def race2(options: FixtureOptions) -> int:
    tx, rx = make_channel(str)

    def produce(sender, tag: str) -> None:
        _jitter()
        sender.send(tag)
        sender.close()

    workers = [
        ids.spawn_managed(produce, tx.clone(), "a"),
        ids.spawn_managed(produce, tx.clone(), "b"),
    ]
    tx.close()

    order = [rx.receive(), rx.receive()]
    for worker in workers:
        worker.join()

    print("order=" + ",".join(order))
    return 0 if order == ["a", "b"] else 1


@fixture("selrace", NondeterminismClass.SELECT_READINESS,
         "two channels race into a select, index 0 must win", flaky=True)
def selrace(options: FixtureOptions) -> int:
    tx_a, rx_a = make_channel(str)
    tx_b, rx_b = make_channel(str)

    def produce(sender, tag: str) -> None:
        _jitter()
        sender.send(tag)

    workers = [
        ids.spawn_managed(produce, tx_a, "a"),
        ids.spawn_managed(produce, tx_b, "b"),
    ]

    select_set = SelectSet([rx_a, rx_b])
    index, payload = select_set.select()
    other = select_set[1 - index].receive()

    for worker in workers:
        worker.join()

    print(f"winner={index} first={payload} second={other}")
    return 0 if index == 0 else 1


@fixture("exitrace", NondeterminismClass.EXIT_RACE,
         "a daemon worker's final send races the main thread's exit")
def exitrace(options: FixtureOptions) -> int:
    tx, rx = make_channel(str)

    def work() -> None:
        tx.send("tick")
        _jitter()
        tx.send("final")

    ids.spawn_managed(work, daemon=True)

    first = rx.receive()
    _jitter()

    print(f"first={first}")
    return 0 if first == "tick" else 1


@fixture("randbits", NondeterminismClass.EXTERNAL,
         "a worker routes 32 random bits over two channels; replay must desync")
def randbits(options: FixtureOptions) -> int:
    tx_ones, rx_ones = make_channel(int)
    tx_zeros, rx_zeros = make_channel(int)
    tx_done, rx_done = make_channel(int)

    def work() -> None:
        value = random.getrandbits(32)
        for bit in range(32):
            if value >> bit & 1:
                tx_ones.send(bit)
            else:
                tx_zeros.send(bit)
        tx_done.send(value)

    worker = ids.spawn_managed(work)

    select_set = SelectSet([rx_ones, rx_zeros, rx_done])
    ones: set[int] = set()
    seen = 0
    value = None

    while value is None:
        index, payload = select_set.select()
        if index == 2:
            value = payload
            continue
        seen += 1
        if index == 0:
            ones.add(payload)

    # Bits are all queued before the done message
    for index, receiver in enumerate((rx_ones, rx_zeros)):
        while True:
            try:
                payload = receiver.try_receive()
            except (ChannelEmpty, Disconnected):
                break
            seen += 1
            if index == 0:
                ones.add(payload)

    worker.join()

    rebuilt = sum(1 << bit for bit in ones)
    print(f"value={value} rebuilt={rebuilt} bits={seen}")
    return 0 if rebuilt == value and seen == 32 else 1


@fixture("unmanaged", NondeterminismClass.UNMANAGED_THREAD,
         "a raw thread creates a channel and reports its ids to main")
def unmanaged(options: FixtureOptions) -> int:
    tx, rx = make_channel(tuple)

    def work() -> None:
        _, own_rx = make_channel(int)
        tx.send((str(ids.current_dti()), str(own_rx.channel_id)))

    thread = threading.Thread(target=work)
    thread.start()

    dti, channel = rx.receive()
    thread.join()

    print(f"dti={dti} channel={channel}")
    return 0 if (dti, channel) == ("NONE", "(NONE,1)") else 1


@fixture("pipeline", NondeterminismClass.NONE,
         "source [1] -> doubler [2] -> main, acyclic")
def pipeline(options: FixtureOptions) -> int:
    count = options.messages or 100
    tx_raw, rx_raw = make_channel(int)
    tx_out, rx_out = make_channel(int)

    def source() -> None:
        with tx_raw:
            for i in range(count):
                tx_raw.send(i)

    def double() -> None:
        with tx_out:
            for i in rx_raw:
                tx_out.send(i * 2)

    workers = [ids.spawn_managed(source), ids.spawn_managed(double)]
    results = list(rx_out)
    for worker in workers:
        worker.join()

    total = sum(results)
    print(f"received={len(results)} sum={total}")
    return 0 if results == [2 * i for i in range(count)] else 1


@fixture("pingpong", NondeterminismClass.NONE,
         "main and [1] bounce a counter over two channels")
def pingpong(options: FixtureOptions) -> int:
    rounds = options.messages or DEFAULT_MESSAGES
    tx_ping, rx_ping = make_channel(int)
    tx_pong, rx_pong = make_channel(int)

    def echo() -> None:
        for _ in range(rounds):
            tx_pong.send(rx_ping.receive() + 1)

    worker = ids.spawn_managed(echo)

    value = 0
    for _ in range(rounds):
        tx_ping.send(value)
        value = rx_pong.receive()

    worker.join()

    print(f"rounds={rounds} value={value}")
    return 0 if value == rounds else 1


@fixture("spawntree", NondeterminismClass.NONE,
         "two levels of spawns, each thread creating two channels")
def spawntree(options: FixtureOptions) -> int:
    tx, rx = make_channel(tuple)

    def node(depth: int, sender) -> None:
        _jitter()
        channels = [make_channel(int)[1].channel_id for _ in range(2)]
        children = []
        if depth < 2:
            children = [ids.spawn_managed(node, depth + 1, sender.clone()) for _ in range(2)]
        sender.send((str(ids.current_dti()), ",".join(str(c) for c in channels)))
        sender.close()
        for child in children:
            child.join()

    root = ids.spawn_managed(node, 1, tx.clone())
    second = ids.spawn_managed(node, 1, tx.clone())
    tx.close()

    reports = sorted(rx)

    root.join()
    second.join()

    for dti, channels in reports:
        print(f"dti={dti} channels={channels}")

    dtis = [dti for dti, _ in reports]
    return 0 if len(dtis) == 6 and len(set(dtis)) == 6 else 1


@fixture("bulk", NondeterminismClass.NONE,
         "one producer streams many messages of a fixed payload size")
def bulk(options: FixtureOptions) -> int:
    count = options.messages or DEFAULT_BULK_MESSAGES
    padding = b"x" * options.payload_bytes
    tx, rx = make_channel(bytes)

    def produce() -> None:
        with tx:
            for i in range(count):
                tx.send((i, padding))

    worker = ids.spawn_managed(produce)

    received = 0
    for i, payload in rx:
        if i != received or len(payload) != options.payload_bytes:
            logger.error(f"Out of order message {i} at position {received}")
            return 1
        received += 1

    worker.join()

    print(f"received={received} payload_bytes={options.payload_bytes}")
    return 0 if received == count else 1
