"""Offline analysis of record logs.

- :func:`dump` renders a log one entry per line.
- :func:`build_graph` derives the thread/channel communication graph: an
  edge thread -> channel per recorded send and channel -> thread per
  successful receive or select. Edge counts are event counts.
- :func:`export_dot` renders that graph as Graphviz DOT.
- :func:`find_cycles` lists every simple cycle of the graph.

All unmanaged threads collapse into the single ``NONE`` node.
"""

import networkx as nx

from dataclasses import dataclass, field

from .codec import VERSION
from .events import (
    RECEIVE_EVENTS, EventType, RecordLog,
    SelectedIndex, Success,
)
from .ids import DetChannelId, DetThreadId


Node = DetThreadId | DetChannelId

ACYCLIC_DISCLAIMER = (
    "note: an acyclic graph for one execution does not prove the program "
    "is deadlock free; other executions may communicate differently"
)



def node_key(node: Node) -> tuple:
    """Total order on nodes: threads first, then channels."""
    if isinstance(node, DetThreadId):
        return (0, node.sort_key())
    return (1, node.sort_key())


def _node_id(node: Node) -> str:
    prefix = "t" if isinstance(node, DetThreadId) else "c"
    return f'"{prefix}:{node}"'



def dump(log: RecordLog) -> str:
    """Render a log as a header line plus one line per entry."""
    lines = [f"# rr-log version={VERSION} entries={len(log)}"]
    lines.extend(str(entry) for entry in log.sorted_entries())
    return "\n".join(lines) + "\n"



@dataclass
class CommGraph:
    """Bipartite thread/channel communication graph backed by networkx."""

    graph: nx.DiGraph = field(default_factory=nx.DiGraph)


    def add_edge(self, src: Node, dst: Node) -> None:
        for node in (src, dst):
            if node not in self.graph:
                kind = "thread" if isinstance(node, DetThreadId) else "channel"
                self.graph.add_node(node, kind=kind)
        if self.graph.has_edge(src, dst):
            self.graph[src][dst]["count"] += 1
        else:
            self.graph.add_edge(src, dst, count=1)


    def threads(self) -> list[DetThreadId]:
        return sorted(n for n in self.graph if isinstance(n, DetThreadId))


    def channels(self) -> list[DetChannelId]:
        return sorted(n for n in self.graph if isinstance(n, DetChannelId))


    def edges(self) -> list[tuple[Node, Node, int]]:
        """Return ``(src, dst, count)`` sorted by endpoints."""
        edges = [(u, v, data["count"]) for u, v, data in self.graph.edges(data=True)]
        return sorted(edges, key=lambda e: (node_key(e[0]), node_key(e[1])))



def build_graph(log: RecordLog) -> CommGraph:
    """Derive the communication graph of a log."""
    graph = CommGraph()

    for entry in log.sorted_entries():
        status = entry.status

        if entry.event_type is EventType.SEND and entry.channels:
            graph.add_edge(entry.thread, entry.channels[0])

        elif entry.event_type in RECEIVE_EVENTS and isinstance(status, Success) and entry.channels:
            graph.add_edge(entry.channels[0], entry.thread)

        elif entry.event_type is EventType.SELECT and isinstance(status, SelectedIndex):
            if status.index < len(entry.channels):
                graph.add_edge(entry.channels[status.index], entry.thread)

    return graph



def export_dot(graph: CommGraph) -> str:
    """Render the graph as a DOT digraph.

    Thread nodes are boxes, channel nodes ellipses, edges are labelled with
    their event counts. Output is deterministic.
    """
    if graph.graph.number_of_nodes() == 0:
        return "digraph comm {}\n"

    lines = ["digraph comm {"]

    for thread in graph.threads():
        if thread.is_none:
            lines.append(f'  {_node_id(thread)} [shape=box, style=dashed, label="NONE (unmanaged)"];')
        else:
            lines.append(f'  {_node_id(thread)} [shape=box, label="{thread}"];')

    for channel in graph.channels():
        lines.append(f'  {_node_id(channel)} [shape=ellipse, label="{channel}"];')

    for src, dst, count in graph.edges():
        lines.append(f'  {_node_id(src)} -> {_node_id(dst)} [label="{count}"];')

    lines.append("}")
    return "\n".join(lines) + "\n"



@dataclass
class CycleReport:
    """Simple cycles of a communication graph.

    Attributes:
        cycles: Each cycle as its node sequence, starting at its smallest
            node and repeating it at the end.
    """

    cycles: list[list[Node]] = field(default_factory=list)

    @property
    def acyclic(self) -> bool:
        return not self.cycles

    def render(self) -> str:
        if self.acyclic:
            lines = ["no communication cycles found", ACYCLIC_DISCLAIMER]
        else:
            lines = [f"{len(self.cycles)} communication cycle(s) found"]
            lines.extend(" -> ".join(str(n) for n in cycle) for cycle in self.cycles)
        return "\n".join(lines) + "\n"



def canonical_cycle(cycle: list[Node]) -> list[Node]:
    """Rotate a cycle to start at its smallest node and close it."""
    start = min(range(len(cycle)), key=lambda i: node_key(cycle[i]))
    rotated = cycle[start:] + cycle[:start]
    return rotated + [rotated[0]]


def find_cycles(graph: CommGraph) -> CycleReport:
    """Return every simple cycle of the graph, each once."""
    cycles = [canonical_cycle(list(c)) for c in nx.simple_cycles(graph.graph)]
    cycles.sort(key=lambda c: (len(c), [node_key(n) for n in c]))
    return CycleReport(cycles)
