import os
import threading
import pytest

from collections import defaultdict

from ..src import ids
from ..src.channel import make_channel
from ..src.codec import deserialize_log, encode_log
from ..src.config import Mode, RrConfig
from ..src.errors import LogIOError
from ..src.events import SEND_OK, ChannelFlavor, EventType
from ..src.ids import NONE, ROOT, DetThreadId
from ..src.record import Recorder
from ..src.runtime import session



def _produce(count: int) -> None:
    tx, rx = make_channel(int)

    def run():
        with tx:
            for i in range(count):
                tx.send(i)

    worker = ids.spawn_managed(run)
    assert list(rx) == list(range(count))
    worker.join()


def _record(fn, *args):
    with session(RrConfig(mode=Mode.RECORD)) as runtime:
        fn(*args)
        return runtime.recorder.snapshot()



class TestRecorder:

    def test_contiguous_clocks(self):
        log = _record(_produce, 20)

        by_thread = defaultdict(list)
        for entry in log:
            by_thread[entry.thread].append(entry.event_id)

        assert set(by_thread) == {ROOT, DetThreadId((1,))}
        for event_ids in by_thread.values():
            assert event_ids == list(range(len(event_ids)))

        # 20 receives plus the disconnect
        assert len(by_thread[ROOT]) == 21


    def test_unmanaged_threads_share_clock(self):

        def body():
            tx, rx = make_channel(int)
            threads = [threading.Thread(target=lambda: [tx.send(i) for i in range(3)]) for _ in range(2)]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()

        log = _record(body)
        none_ids = sorted(e.event_id for e in log if e.thread == NONE)

        assert none_ids == list(range(6))


    def test_deterministic_bytes(self):

        assert encode_log(_record(_produce, 50)) == encode_log(_record(_produce, 50))


    def test_record_event_direct(self):
        recorder = Recorder()

        with session(RrConfig()):
            channel = make_channel()[0].channel_id
            entry = recorder.record_event(EventType.SEND, ChannelFlavor.LOCAL_UNBOUNDED, "int", SEND_OK, (channel,))

        assert entry.key == (ROOT, 0)
        assert len(recorder.snapshot()) == 1



class TestFlush:

    def test_flush(self, tmp_path):
        path = str(tmp_path / "run.log")

        with session(RrConfig(mode=Mode.RECORD, record_file=path)) as runtime:
            _produce(5)
            snapshot = runtime.recorder.snapshot()
            size = runtime.recorder.flush(path)

        assert size == os.path.getsize(path)
        assert deserialize_log(path).entries == snapshot.entries


    def test_shutdown_flushes(self, tmp_path):
        path = str(tmp_path / "run.log")

        with session(RrConfig(mode=Mode.RECORD, record_file=path)) as runtime:
            _produce(3)
            runtime.shutdown()

        assert len(deserialize_log(path)) == 7


    def test_unwritable(self, tmp_path):
        recorder = Recorder()

        with pytest.raises(LogIOError):
            recorder.flush(str(tmp_path / "missing" / "run.log"))