import logging
from dataclasses import dataclass, replace
from enum import Enum
from itertools import product
from typing import Any, Callable, Hashable, Optional, Sequence

from src.core.models import BOTTOM, EMPTY, UNDECIDED, ProtocolSpec, uniform_domain
from src.core.topology import AgentId, Topology, TopologyKind
from src.errors import UnsupportedTopology

logger = logging.getLogger(__name__)


class Direction(str, Enum):
    clockwise = "cw"
    counterclockwise = "ccw"
    direct = "direct"


@dataclass(frozen=True)
class Share:
    """
    One share of an origin's secret.

    On a ring the clockwise share carries the mask and the counterclockwise share
    carries (secret - mask) mod m; on a complete graph a single direct share
    carries the secret itself. public travels with every share in the clear.
    """

    origin: AgentId
    direction: Direction
    value: int
    public: Hashable = None


# knowledge[k] = (secret of k, public part of k), indexed by agent id
Knowledge = tuple[tuple[int, Hashable], ...]
DecideFn = Callable[[AgentId, Knowledge], Any]


@dataclass(frozen=True)
class TransportState:
    agent: AgentId
    secret: int
    public_random: Any = None
    held: tuple[Share, ...] = ()
    decision: Any = UNDECIDED


def _is_share(message: Any, origin: AgentId, direction: Direction, modulus: Optional[int]) -> bool:
    if not isinstance(message, Share):
        return False
    if message.origin != origin or message.direction != direction:
        return False
    if isinstance(message.value, bool) or not isinstance(message.value, int):
        return False
    return modulus is None or 0 <= message.value < modulus


class _Transport:
    """Shared wiring for the ring and complete-graph sharing schedules."""

    def __init__(
        self,
        topology: Topology,
        modulus: int,
        secret_of: Callable[[int], int],
        public_of: Callable[[AgentId, Any], Hashable],
        decide: DecideFn,
    ):
        self.topology = topology
        self.modulus = modulus
        self.secret_of = secret_of
        self.public_of = public_of
        self.decide = decide

    def init(self, agent: AgentId, input_: int, topology: Topology) -> TransportState:
        return TransportState(agent=agent, secret=self.secret_of(input_))

    def silent(self, agent: AgentId) -> dict[AgentId, Any]:
        return {b: EMPTY for b in self.topology.neighbors(agent)}

    def abort(self, state: TransportState):
        logger.debug("agent %s detected a deviation", state.agent)
        return replace(state, decision=BOTTOM), self.silent(state.agent), BOTTOM

    def conclude(self, state: TransportState, knowledge: Knowledge):
        decision = self.decide(state.agent, knowledge)
        return replace(state, decision=decision), self.silent(state.agent), decision


class RingTransport(_Transport):
    """
    Two-path sharing along the cycle order: every share travels n-1 hops, sends
    happen in rounds 0..n-2 and every agent decides in round n-1.
    """

    def __init__(self, topology: Topology, *args, **kwargs):
        super().__init__(topology, *args, **kwargs)
        self.order = topology.cycle_order
        self.position = {a: k for k, a in enumerate(self.order)}
        self.n = topology.n

    def at(self, agent: AgentId, offset: int) -> AgentId:
        return self.order[(self.position[agent] + offset) % self.n]

    def step(self, state: TransportState, round_: int, incoming, selection):
        if state.decision is not UNDECIDED:
            return state, self.silent(state.agent), state.decision
        agent = state.agent
        cw, ccw = self.at(agent, 1), self.at(agent, -1)
        if round_ == 0:
            public_random, mask = selection if selection is not None else (None, 0)
            public = self.public_of(agent, public_random)
            state = replace(state, public_random=public_random)
            return (
                state,
                {
                    cw: Share(agent, Direction.clockwise, mask, public),
                    ccw: Share(agent, Direction.counterclockwise, (state.secret - mask) % self.modulus, public),
                },
                UNDECIDED,
            )

        from_ccw, from_cw = incoming.get(ccw), incoming.get(cw)
        if not _is_share(from_ccw, self.at(agent, -round_), Direction.clockwise, self.modulus):
            return self.abort(state)
        if not _is_share(from_cw, self.at(agent, round_), Direction.counterclockwise, self.modulus):
            return self.abort(state)
        state = replace(state, held=state.held + (from_ccw, from_cw))
        if round_ < self.n - 1:
            return state, {cw: from_ccw, ccw: from_cw}, UNDECIDED

        halves: dict[AgentId, dict[Direction, Share]] = {}
        for share in state.held:
            halves.setdefault(share.origin, {})[share.direction] = share
        knowledge = []
        for origin in self.topology.agents:
            if origin == agent:
                knowledge.append((state.secret, self.public_of(agent, state.public_random)))
                continue
            pair = halves.get(origin, {})
            first, second = pair.get(Direction.clockwise), pair.get(Direction.counterclockwise)
            if first is None or second is None or first.public != second.public:
                return self.abort(state)
            knowledge.append(((first.value + second.value) % self.modulus, first.public))
        return self.conclude(state, tuple(knowledge))


class CompleteTransport(_Transport):
    """Round 0 broadcasts every secret directly; round 1 validates and decides."""

    def step(self, state: TransportState, round_: int, incoming, selection):
        if state.decision is not UNDECIDED:
            return state, self.silent(state.agent), state.decision
        agent = state.agent
        if round_ == 0:
            public_random, _ = selection if selection is not None else (None, 0)
            state = replace(state, public_random=public_random)
            share = Share(agent, Direction.direct, state.secret, self.public_of(agent, public_random))
            return state, {b: share for b in self.topology.neighbors(agent)}, UNDECIDED

        knowledge = []
        for origin in self.topology.agents:
            if origin == agent:
                knowledge.append((state.secret, self.public_of(agent, state.public_random)))
                continue
            message = incoming.get(origin)
            if not _is_share(message, origin, Direction.direct, None):
                return self.abort(state)
            knowledge.append((message.value, message.public))
        return self.conclude(state, tuple(knowledge))


def transport_kind(topology: Topology) -> TopologyKind:
    """Which sharing schedule runs on the topology; raises UnsupportedTopology."""

    if topology.kind is TopologyKind.ring and topology.cycle_order is not None:
        return TopologyKind.ring
    if topology.kind is TopologyKind.complete:
        return TopologyKind.complete
    if topology.kind is TopologyKind.custom:
        # a custom triangle is both; it runs the ring schedule
        if topology.cycle_order is not None:
            return TopologyKind.ring
        if topology.is_complete:
            return TopologyKind.complete
    raise UnsupportedTopology(
        f"sharing needs a ring or complete network, got {topology.kind.value} n={topology.n}"
    )


def make_sharing_protocol(
    name: str,
    topology: Topology,
    r: int,
    decide: DecideFn,
    modulus: Optional[int] = None,
    secret_of: Callable[[int], int] = lambda input_: input_,
    public_of: Callable[[AgentId, Any], Hashable] = lambda agent, drawn: None,
    public_domain: Sequence[Any] = (),
    randomized: bool = True,
    distribution: Sequence = (),
) -> ProtocolSpec:
    """
    The make_sharing_protocol function builds a ProtocolSpec on the two-path ring
    schedule or the direct complete-graph schedule.

    Round-0 selections are (public random, mask) pairs; the mask is uniform over
    0..modulus-1 on rings when randomized and 0 otherwise.

    :param name: str: Registry name of the protocol
    :param topology: Topology: A ring, complete graph or single-cycle network
    :param r: int: Number of input values
    :param decide: DecideFn: Maps (agent, reconstructed knowledge) to a decision
    :param modulus: Optional[int]: Share arithmetic modulus, defaults to r
    :param secret_of: Callable: Maps an input to the shared secret
    :param public_of: Callable: Maps (agent, public random) to the clear-text part
    :param public_domain: Sequence[Any]: Values of the public random, empty for none
    :param randomized: bool: Draw ring masks at random
    :param distribution: Sequence: Input prior, defaults to uniform
    :return: A ProtocolSpec with empty_on_idle set
    """

    kind = transport_kind(topology)
    modulus = modulus or r
    if kind is TopologyKind.ring:
        transport = RingTransport(topology, modulus, secret_of, public_of, decide)
        rounds_bound = topology.n
        masks = tuple(range(modulus)) if randomized else (0,)
    else:
        transport = CompleteTransport(topology, modulus, secret_of, public_of, decide)
        rounds_bound = 2
        masks = (0,)
    publics = tuple(public_domain) or (None,)
    if len(publics) * len(masks) > 1:
        randomness = (uniform_domain(product(publics, masks)),)
    else:
        randomness = ()
    return ProtocolSpec(
        name=name,
        topology=topology,
        r=r,
        rounds_bound=rounds_bound,
        init=transport.init,
        step=transport.step,
        randomness=randomness,
        distribution=tuple(distribution),
        empty_on_idle=True,
    )
