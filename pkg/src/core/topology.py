import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable

import networkx as nx

from src.errors import ConfigInvalid, DuplicateEdge, MalformedEdge, SizeTooSmall, UnknownAgent

logger = logging.getLogger(__name__)

AgentId = int
Edge = tuple[AgentId, AgentId]


class TopologyKind(str, Enum):
    ring = "ring"
    complete = "complete"
    custom = "custom"


def _canonical(a: AgentId, b: AgentId) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Topology:
    """
    An undirected network with dense integer agent ids 0..n-1.

    Every agent's protocol instance receives the whole Topology at init, so the
    network is global knowledge.
    """

    n: int
    edges: frozenset[Edge]
    kind: TopologyKind = TopologyKind.custom
    agents: tuple[AgentId, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(range(self.n)))

    @cached_property
    def _adjacency(self) -> dict[AgentId, tuple[AgentId, ...]]:
        adjacency: dict[AgentId, set[AgentId]] = {a: set() for a in self.agents}
        for a, b in self.edges:
            adjacency[a].add(b)
            adjacency[b].add(a)
        return {a: tuple(sorted(nbrs)) for a, nbrs in adjacency.items()}

    def neighbors(self, agent: AgentId) -> tuple[AgentId, ...]:
        if agent not in self._adjacency:
            raise UnknownAgent(f"agent {agent} is not in the topology")
        return self._adjacency[agent]

    def has_edge(self, a: AgentId, b: AgentId) -> bool:
        return _canonical(a, b) in self.edges

    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.agents)
        graph.add_edges_from(self.edges)
        return graph

    @cached_property
    def is_complete(self) -> bool:
        return len(self.edges) == self.n * (self.n - 1) // 2

    @cached_property
    def cycle_order(self) -> tuple[AgentId, ...] | None:
        """
        The clockwise visiting order when the topology is a single cycle, else None.

        The walk starts at agent 0 and leaves through its smaller neighbor.
        """
        if self.n < 3 or len(self.edges) != self.n:
            return None
        if any(len(self.neighbors(a)) != 2 for a in self.agents):
            return None
        order = [0]
        previous, current = None, 0
        while True:
            nxt = [b for b in self.neighbors(current) if b != previous]
            step = nxt[0] if previous is not None else self.neighbors(0)[0]
            if step == 0:
                break
            order.append(step)
            previous, current = current, step
        return tuple(order) if len(order) == self.n else None

    def to_document(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}


def build_topology(kind: TopologyKind | str, n: int) -> Topology:
    """
    The build_topology function creates a ring or complete network with ids 0..n-1.

    :param kind: TopologyKind | str: ring or complete
    :param n: int: The number of agents
    :return: A Topology with the canonical edge set for the kind
    """

    kind = TopologyKind(kind)
    if kind is TopologyKind.ring:
        if n < 3:
            raise SizeTooSmall(f"a ring needs at least 3 agents, got {n}")
        edges = frozenset(_canonical(i, (i + 1) % n) for i in range(n))
    elif kind is TopologyKind.complete:
        if n < 2:
            raise SizeTooSmall(f"a complete network needs at least 2 agents, got {n}")
        edges = frozenset((a, b) for a in range(n) for b in range(a + 1, n))
    else:
        raise ConfigInvalid("use build_custom for custom topologies")
    return Topology(n=n, edges=edges, kind=kind)


def build_custom(n: int, edges: Iterable[Iterable[int]]) -> Topology:
    """
    The build_custom function validates an explicit edge list over ids 0..n-1.

    :param n: int: The number of agents
    :param edges: Iterable[Iterable[int]]: Unordered agent pairs
    :return: A Topology of kind custom
    """

    seen: set[Edge] = set()
    for edge in edges:
        pair = tuple(edge)
        if len(pair) != 2:
            raise MalformedEdge(f"edge {pair} is not a pair")
        a, b = pair
        if not all(isinstance(x, int) and 0 <= x < n for x in pair) or a == b:
            raise MalformedEdge(f"edge {pair} is malformed for n={n}")
        canonical = _canonical(a, b)
        if canonical in seen:
            raise DuplicateEdge(f"edge {pair} appears twice")
        seen.add(canonical)
    return Topology(n=n, edges=frozenset(seen), kind=TopologyKind.custom)


def load_topology(path: str | Path) -> Topology:
    """Read a {"n": ..., "edges": [[a, b], ...]} document into a custom Topology."""

    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as err:
        raise MalformedEdge(f"cannot read topology file {path}: {err}") from err
    return topology_from_document(document)


def topology_from_document(document: dict) -> Topology:
    try:
        return build_custom(int(document["n"]), document["edges"])
    except (KeyError, TypeError, ValueError) as err:
        raise MalformedEdge(f"invalid topology document: {err}") from err


def check_two_vertex_connected(topology: Topology) -> bool:
    """
    True iff n >= 3 and removing any single agent leaves the rest connected.

    Brute-force vertex removal; networks here are desk-sized.
    """

    if topology.n < 3:
        return False
    graph = topology.graph()
    if not nx.is_connected(graph):
        return False
    for agent in topology.agents:
        rest = graph.subgraph(a for a in topology.agents if a != agent)
        if not nx.is_connected(rest):
            logger.debug("removing agent %s disconnects the network", agent)
            return False
    return True


def distances_without(topology: Topology, removed: AgentId) -> dict[AgentId, dict[AgentId, int]]:
    """Shortest-path hop counts in the network with one agent removed."""

    graph = topology.graph()
    graph.remove_node(removed)
    return {a: dict(lengths) for a, lengths in nx.all_pairs_shortest_path_length(graph)}
