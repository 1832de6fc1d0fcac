import threading
import time
import unittest.mock
import pytest

from ..src import ids
from ..src.channel import SelectSet, make_channel, select
from ..src.config import Mode, RrConfig
from ..src.errors import ChannelEmpty, Disconnected, RecvTimeout, SelectError, SendError
from ..src.events import (
    EMPTY, RECV_ERROR, SEND_OK, TIMEOUT,
    ChannelFlavor, EventType, SelectedIndex, Success,
)
from ..src.ids import ROOT, DetChannelId, DetThreadId
from ..src.runtime import session



@pytest.fixture
def noop():
    with session(RrConfig()) as runtime:
        yield runtime


@pytest.fixture
def record():
    with session(RrConfig(mode=Mode.RECORD)) as runtime:
        yield runtime


def _entries(runtime, thread=ROOT):
    return [e for e in runtime.recorder.snapshot() if e.thread == thread]



class TestNoop:

    def test_fifo(self, noop):
        tx, rx = make_channel(int)
        for i in range(5):
            tx.send(i)

        assert [rx.receive() for _ in range(5)] == list(range(5))
        assert noop.recorder is None and noop.replayer is None


    def test_try_receive_empty(self, noop):
        _, rx = make_channel()

        with pytest.raises(ChannelEmpty):
            rx.try_receive()


    def test_timeout_receive(self, noop):
        _, rx = make_channel()

        start = time.monotonic()
        with pytest.raises(RecvTimeout):
            rx.timeout_receive(0.05)

        assert time.monotonic() - start >= 0.05


    def test_disconnect(self, noop):
        tx, rx = make_channel()
        clone = tx.clone()
        tx.send("last")
        tx.close()
        clone.close()

        assert rx.receive() == "last"
        with pytest.raises(Disconnected):
            rx.receive()
        with pytest.raises(Disconnected):
            rx.try_receive()


    def test_send_to_closed_receiver(self, noop):
        tx, rx = make_channel()
        rx.close()

        with pytest.raises(SendError):
            tx.send(1)


    def test_closed_sender(self, noop):
        tx, _ = make_channel()
        tx.close()
        tx.close()

        with pytest.raises(SendError):
            tx.send(1)
        with pytest.raises(SendError):
            tx.clone()


    def test_iteration(self, noop):
        tx, rx = make_channel(int)

        def produce():
            with tx:
                for i in range(10):
                    tx.send(i)

        worker = ids.spawn_managed(produce)
        assert list(rx) == list(range(10))
        worker.join()


    def test_per_sender_fifo(self, noop):
        tx, rx = make_channel(tuple)

        def produce(sender, tag):
            with sender:
                for i in range(50):
                    sender.send((tag, i))

        workers = [ids.spawn_managed(produce, tx.clone(), tag) for tag in "ab"]
        tx.close()
        received = list(rx)
        for worker in workers:
            worker.join()

        for tag in "ab":
            assert [i for t, i in received if t == tag] == list(range(50))


    @pytest.mark.parametrize("data_type, name", [
        (int, "int"),
        ("u64", "u64"),
        (None, "object"),
    ])
    def test_data_type(self, noop, data_type, name: str):
        tx, rx = make_channel(data_type)

        assert tx.data_type == rx.data_type == name
        assert tx.flavor is ChannelFlavor.LOCAL_UNBOUNDED


    def test_data_type_too_long(self, noop):

        with pytest.raises(ValueError):
            make_channel("x" * 70_000)
        assert make_channel()[0].channel_id == DetChannelId(ROOT, 1)



class TestSelect:

    def test_ready_index(self, noop):
        _, rx_a = make_channel()
        tx_b, rx_b = make_channel()
        select_set = SelectSet()

        assert select_set.add(rx_a) == 0
        assert select_set.add(rx_b) == 1

        tx_b.send("b")
        assert select_set.select() == (1, "b")


    def test_blocks_until_ready(self, noop):
        tx, rx = make_channel()
        _, other = make_channel()

        def late():
            time.sleep(0.05)
            tx.send("late")

        worker = ids.spawn_managed(late)
        assert select(SelectSet([other, rx])) == (1, "late")
        worker.join()


    def test_all_disconnected(self, noop):
        tx_a, rx_a = make_channel()
        tx_b, rx_b = make_channel()
        tx_a.close()
        tx_b.close()

        with pytest.raises(SelectError):
            select(SelectSet([rx_a, rx_b]))


    def test_empty_and_duplicate(self, noop):
        _, rx = make_channel()

        with pytest.raises(ValueError):
            select(SelectSet())
        with pytest.raises(ValueError):
            SelectSet([rx, rx])


    def test_receiver_limit(self, noop):
        receivers = [make_channel()[1] for _ in range(3)]

        with unittest.mock.patch("app.src.channel.MAX_FIELD_LEN", 2):
            select_set = SelectSet(receivers[:2])
            with pytest.raises(ValueError):
                select_set.add(receivers[2])

        assert len(select_set) == 2



class TestRecord:

    def test_single_send(self, record):
        tx, _ = make_channel("u64")
        tx.send(42)

        [entry] = _entries(record)
        assert str(entry) == "[] 0 Send LOCAL_UNBOUNDED u64 SendOk ch=([],1)"


    def test_statuses(self, record):
        tx, rx = make_channel(int)
        channel = (DetChannelId(ROOT, 1),)

        with pytest.raises(ChannelEmpty):
            rx.try_receive()
        with pytest.raises(RecvTimeout):
            rx.timeout_receive(0.01)
        tx.send(1)
        rx.receive()
        tx.close()
        with pytest.raises(Disconnected):
            rx.receive()

        entries = _entries(record)
        assert [(e.event_id, e.event_type, e.status) for e in entries] == [
            (0, EventType.TRY_RECV, EMPTY),
            (1, EventType.TIMEOUT_RECV, TIMEOUT),
            (2, EventType.SEND, SEND_OK),
            (3, EventType.RECV, Success(ROOT)),
            (4, EventType.RECV, RECV_ERROR),
        ]
        assert all(e.channels == channel for e in entries)


    def test_failed_send(self, record):
        tx, rx = make_channel()
        rx.close()

        with pytest.raises(SendError):
            tx.send(1)

        [entry] = _entries(record)
        assert entry.event_type is EventType.SEND
        assert entry.status == RECV_ERROR


    def test_envelope_sender(self, record):
        tx, rx = make_channel(str)

        def produce(sender):
            with sender:
                sender.send(str(ids.current_dti()))

        workers = [ids.spawn_managed(produce, tx.clone()) for _ in range(3)]
        tx.close()
        payloads = list(rx)
        for worker in workers:
            worker.join()

        receives = [e for e in _entries(record) if e.status != RECV_ERROR]
        assert [str(e.status.sender) for e in receives] == payloads
        assert sorted(payloads) == ["[1]", "[2]", "[3]"]


    def test_select(self, record):
        _, rx_a = make_channel()
        tx_b, rx_b = make_channel()

        worker = ids.spawn_managed(lambda: tx_b.send("b"))
        worker.join()

        assert select(SelectSet([rx_a, rx_b])) == (1, "b")

        [entry] = _entries(record)
        assert entry.event_type is EventType.SELECT
        assert entry.status == SelectedIndex(1, DetThreadId((1,)))
        assert entry.channels == (DetChannelId(ROOT, 1), DetChannelId(ROOT, 2))
        assert str(entry).endswith("SelectedIndex(1,[1]) ch=[([],1),([],2)]")


    def test_select_error(self, record):
        tx, rx = make_channel()
        tx.close()

        with pytest.raises(SelectError):
            select(SelectSet([rx]))

        [entry] = _entries(record)
        assert entry.status == RECV_ERROR



class TestUnmanagedSenders:

    def test_warns_once_per_channel(self, noop):
        tx, rx = make_channel()
        # Keeps all senders alive at once so their thread idents differ
        barrier = threading.Barrier(3)

        def send():
            barrier.wait()
            tx.send(1)
            barrier.wait()

        with unittest.mock.patch("app.src.channel.logger") as logger:
            threads = [threading.Thread(target=send) for _ in range(3)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()

        assert logger.warning.call_count == 1
        assert [rx.receive() for _ in range(3)] == [1, 1, 1]


    def test_single_unmanaged_sender_is_silent(self, noop):
        tx, _ = make_channel()

        def send():
            tx.send(1)
            tx.send(2)

        with unittest.mock.patch("app.src.channel.logger") as logger:
            thread = threading.Thread(target=send)
            thread.start()
            thread.join()

        logger.warning.assert_not_called()
