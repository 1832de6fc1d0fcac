import pytest

from hypothesis import given, settings, strategies as st

from ..src.config import Mode, RrConfig
from ..src.events import (
    RECV_ERROR, SEND_OK,
    ChannelFlavor, EventType, LogEntry, RecordLog,
    SelectedIndex, Success,
)
from ..src.fixtures import FixtureOptions, run_fixture
from ..src.graph import (
    ACYCLIC_DISCLAIMER, CommGraph,
    build_graph, dump, export_dot, find_cycles, node_key,
)
from ..src.ids import NONE, ROOT, DetChannelId, DetThreadId
from ..src.runtime import session


T1 = DetThreadId((1,))
CH1 = DetChannelId(ROOT, 1)
CH2 = DetChannelId(ROOT, 2)



def _log(*entries: tuple) -> RecordLog:
    log = RecordLog()
    for thread, event_id, event_type, status, channels in entries:
        log.add(LogEntry(thread, event_id, event_type, ChannelFlavor.LOCAL_UNBOUNDED, "u64", status, channels))
    return log


def _recorded(name: str, messages: int | None = None) -> RecordLog:
    with session(RrConfig(mode=Mode.RECORD)) as runtime:
        assert run_fixture(name, FixtureOptions(messages)) == 0
        return runtime.recorder.snapshot()


MINIMAL = _log(
    (T1, 0, EventType.SEND, SEND_OK, (CH1,)),
    (ROOT, 0, EventType.RECV, Success(T1), (CH1,)),
)


def _brute_force_cycles(graph: CommGraph) -> set[tuple]:
    """Every simple cycle, rotated to start at its smallest node."""
    nodes = sorted(graph.graph.nodes, key=node_key)
    found = set()

    def extend(start, path):
        for succ in graph.graph.successors(path[-1]):
            if succ == start:
                found.add(tuple(path))
            elif succ not in path and node_key(succ) > node_key(start):
                extend(start, path + [succ])

    for start in nodes:
        extend(start, [start])
    return found


@st.composite
def bipartite_graphs(draw) -> CommGraph:
    n_threads = draw(st.integers(min_value=1, max_value=6))
    n_channels = draw(st.integers(min_value=1, max_value=6))
    threads = [DetThreadId((i + 1,)) for i in range(n_threads)]
    channels = [DetChannelId(ROOT, i + 1) for i in range(n_channels)]

    graph = CommGraph()
    for thread in threads:
        for channel in channels:
            if draw(st.booleans()):
                graph.add_edge(thread, channel)
            if draw(st.booleans()):
                graph.add_edge(channel, thread)
    return graph



class TestDump:

    def test_empty(self):

        assert dump(RecordLog()) == "# rr-log version=1 entries=0\n"


    def test_single_send(self):
        log = _log((ROOT, 0, EventType.SEND, SEND_OK, (CH1,)))

        assert dump(log).splitlines()[1] == "[] 0 Send LOCAL_UNBOUNDED u64 SendOk ch=([],1)"


    def test_grouped_by_thread(self):
        lines = dump(_recorded("pingpong", 3)).splitlines()[1:]
        threads = [line.split()[0] for line in lines]
        event_ids = [int(line.split()[1]) for line in lines]

        assert threads == ["[]"] * 6 + ["[1]"] * 6
        assert event_ids == list(range(6)) * 2



class TestBuildGraph:

    def test_minimal(self):
        graph = build_graph(MINIMAL)

        assert graph.threads() == [ROOT, T1]
        assert graph.channels() == [CH1]
        assert graph.edges() == [(T1, CH1, 1), (CH1, ROOT, 1)]


    def test_counts(self):
        log = _log(
            (T1, 0, EventType.SEND, SEND_OK, (CH1,)),
            (T1, 1, EventType.SEND, SEND_OK, (CH1,)),
            (ROOT, 0, EventType.RECV, Success(T1), (CH1,)),
            (ROOT, 1, EventType.RECV, Success(T1), (CH1,)),
            (ROOT, 2, EventType.RECV, RECV_ERROR, (CH1,)),
        )

        assert build_graph(log).edges() == [(T1, CH1, 2), (CH1, ROOT, 2)]


    def test_select_edge(self):
        log = _log((ROOT, 0, EventType.SELECT, SelectedIndex(1, T1), (CH1, CH2)))

        assert build_graph(log).edges() == [(CH2, ROOT, 1)]


    def test_sends_only(self):
        log = _log((T1, 0, EventType.SEND, SEND_OK, (CH1,)))
        graph = build_graph(log)

        assert graph.graph.in_degree(CH1) == 1
        assert graph.graph.out_degree(CH1) == 0



class TestExportDot:

    def test_empty(self):

        assert export_dot(CommGraph()) == "digraph comm {}\n"


    def test_minimal(self):
        dot = export_dot(build_graph(MINIMAL))
        lines = dot.splitlines()

        assert lines[0] == "digraph comm {" and lines[-1] == "}"
        assert sum("shape=" in line for line in lines) == 3
        assert sum("->" in line for line in lines) == 2
        assert '"t:[1]" -> "c:([],1)" [label="1"];' in dot
        assert '"c:([],1)" [shape=ellipse, label="([],1)"];' in dot
        assert '"t:[]" [shape=box, label="[]"];' in dot


    def test_deterministic(self):

        assert export_dot(build_graph(MINIMAL)) == export_dot(build_graph(MINIMAL))


    def test_unmanaged_node(self):
        log = _log((NONE, 0, EventType.SEND, SEND_OK, (CH1,)))

        assert 'style=dashed, label="NONE (unmanaged)"' in export_dot(build_graph(log))



class TestCycles:

    def test_pipeline_acyclic(self):
        report = find_cycles(build_graph(_recorded("pipeline", 5)))

        assert report.acyclic
        assert ACYCLIC_DISCLAIMER in report.render()


    def test_pingpong_cycle(self):
        report = find_cycles(build_graph(_recorded("pingpong", 5)))

        assert len(report.cycles) == 1
        assert report.cycles[0] == [ROOT, CH1, T1, CH2, ROOT]
        assert report.render().splitlines()[1] == "[] -> ([],1) -> [1] -> ([],2) -> []"


    @given(bipartite_graphs())
    @settings(max_examples=500, deadline=None)
    def test_matches_brute_force(self, graph: CommGraph):
        report = find_cycles(graph)

        assert {tuple(c[:-1]) for c in report.cycles} == _brute_force_cycles(graph)
        assert len(report.cycles) == len(_brute_force_cycles(graph))
        assert report.acyclic == (not _brute_force_cycles(graph))
