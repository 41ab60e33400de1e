import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations, permutations, product
from typing import Any, Mapping, Optional, Sequence

from src.conf.config import settings
from src.core.engine import CoalitionController, enumerate_executions
from src.core.models import EMPTY, Payload, ProtocolSpec, RandomnessChoice
from src.core.topology import AgentId
from src.errors import ConfigInvalid, EnumerationCapExceeded

logger = logging.getLogger(__name__)

Link = tuple[AgentId, AgentId]


class Mode(str, Enum):
    honest = "honest"
    misreport = "misreport"
    split_view = "split_view"
    withhold = "withhold"
    bounded_exhaustive = "bounded_exhaustive"


class Communication(str, Enum):
    """
    How freely a split-view coalition may tell different stories.

    Both modes run one controller that sees every member's incoming links, and
    members never pool honest payloads into each other's protocol copies. The
    modes differ only in how worlds are assigned: link_limited shows each honest
    agent one world on all of its coalition links, telepathic picks a world per
    coalition-to-honest link.
    """

    link_limited = "link_limited"
    telepathic = "telepathic"

    @property
    def assignment(self) -> str:
        return "per-link worlds" if self is Communication.telepathic else "one world per honest agent"


@dataclass(frozen=True)
class World:
    """
    One consistent story the coalition tells: claimed inputs and claimed random
    selections per member. Members missing from a mapping use their true input
    or their real draw.
    """

    inputs: tuple[tuple[AgentId, int], ...] = ()
    randomness: tuple[tuple[AgentId, tuple[Any, ...]], ...] = ()

    def input_of(self, member: AgentId, true_input: int) -> int:
        return dict(self.inputs).get(member, true_input)


@dataclass(frozen=True)
class CoalitionStrategy:
    coalition: frozenset[AgentId]
    mode: Mode = Mode.honest
    communication: Communication = Communication.telepathic
    worlds: tuple[World, ...] = (World(),)
    # (member, honest neighbor) -> index into worlds; unlisted links show world 0
    assignment: tuple[tuple[Link, int], ...] = ()
    withheld: frozenset[tuple[int, AgentId, AgentId]] = frozenset()
    schedule: tuple[tuple[tuple[int, AgentId, AgentId], Optional[Payload]], ...] = ()
    schedule_rounds: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coalition", frozenset(self.coalition))

    def world_for(self, member: AgentId, neighbor: AgentId) -> int:
        return dict(self.assignment).get((member, neighbor), 0)

    @property
    def fixed_inputs(self) -> dict[AgentId, int]:
        """Claimed inputs that double as the members' true inputs."""
        if self.mode in (Mode.misreport, Mode.split_view):
            return dict(self.worlds[0].inputs)
        return {}

    @property
    def uses_real_randomness(self) -> bool:
        if self.mode is Mode.bounded_exhaustive:
            return False
        return any(
            member not in dict(world.randomness)
            for world in self.worlds
            for member in self.coalition
        )

    def describe(self) -> str:
        members = ",".join(str(k) for k in sorted(self.coalition))
        if self.mode is Mode.honest:
            return f"honest[{members}]"
        if self.mode is Mode.misreport:
            return f"misreport[{members}] claims={dict(self.worlds[0].inputs)}"
        if self.mode is Mode.split_view:
            views = [(dict(w.inputs), dict(w.randomness)) for w in self.worlds]
            return f"split_view[{members}] worlds={views} links={dict(self.assignment)}"
        if self.mode is Mode.withhold:
            return f"withhold[{members}] {sorted(self.withheld)}"
        return f"bounded_exhaustive[{members}] rounds={self.schedule_rounds} {dict(self.schedule)}"


def honest(coalition) -> CoalitionStrategy:
    return CoalitionStrategy(coalition=frozenset(coalition))


def misreport(coalition, claims: Mapping[AgentId, int]) -> CoalitionStrategy:
    return CoalitionStrategy(
        coalition=frozenset(coalition),
        mode=Mode.misreport,
        worlds=(World(inputs=tuple(sorted(claims.items()))),),
    )


class WorldController(CoalitionController):
    """
    Runs an honest protocol copy per member per world. A member's copy hears honest
    neighbors through the real links and fellow members through the copies living
    in the same world; the payload on a member-to-honest link comes from the world
    assigned to that link.
    """

    def __init__(self, protocol: ProtocolSpec, strategy: CoalitionStrategy):
        self.protocol = protocol
        self.strategy = strategy
        self.members = strategy.coalition
        self.topology = protocol.topology

    def reset(self, inputs: Sequence[int], randomness: RandomnessChoice) -> None:
        self.randomness = randomness
        self.claimed = [dict(world.randomness) for world in self.strategy.worlds]
        self.states = [
            {
                k: self.protocol.init(k, world.input_of(k, inputs[k]), self.topology)
                for k in self.members
            }
            for world in self.strategy.worlds
        ]
        self.sent: list[dict[AgentId, dict]] = [
            {k: {} for k in self.members} for _ in self.strategy.worlds
        ]

    def _selection(self, world: int, member: AgentId, round_: int) -> Any:
        claimed = self.claimed[world].get(member)
        if claimed is None:
            return self.randomness.selection(member, round_)
        return claimed[round_] if round_ < len(claimed) else None

    def act(self, round_: int, incoming):
        for w in range(len(self.strategy.worlds)):
            outgoing = {}
            for k in sorted(self.members):
                view = {
                    b: self.sent[w][b].get(k) if b in self.members else payload
                    for b, payload in incoming[k].items()
                }
                self.states[w][k], sent, _ = self.protocol.step(
                    self.states[w][k], round_, view, self._selection(w, k, round_)
                )
                outgoing[k] = dict(sent)
            self.sent[w] = outgoing

        joint = {}
        for k in self.members:
            joint[k] = {}
            for h in self.topology.neighbors(k):
                if h in self.members:
                    joint[k][h] = self.sent[0][k].get(h)
                elif (round_, k, h) in self.strategy.withheld:
                    joint[k][h] = None
                else:
                    joint[k][h] = self.sent[self.strategy.world_for(k, h)][k].get(h)
        return joint


class ScheduleController(CoalitionController):
    """Open-loop: fixed payloads for the first schedule_rounds rounds, EMPTY after."""

    def __init__(self, protocol: ProtocolSpec, strategy: CoalitionStrategy):
        self.topology = protocol.topology
        self.members = strategy.coalition
        self.horizon = strategy.schedule_rounds
        self.schedule = dict(strategy.schedule)

    def reset(self, inputs, randomness) -> None:
        pass

    def act(self, round_: int, incoming):
        joint = {}
        for k in self.members:
            joint[k] = {
                h: EMPTY
                if h in self.members or round_ >= self.horizon
                else self.schedule.get((round_, k, h))
                for h in self.topology.neighbors(k)
            }
        return joint


def make_controller(protocol: ProtocolSpec, strategy: CoalitionStrategy) -> Optional[CoalitionController]:
    if strategy.mode is Mode.honest:
        return None
    if strategy.mode is Mode.bounded_exhaustive:
        return ScheduleController(protocol, strategy)
    return WorldController(protocol, strategy)


@dataclass(frozen=True)
class StrategySpace:
    families: tuple[Mode, ...] = (Mode.misreport, Mode.split_view, Mode.withhold)
    communication: Communication = Communication.telepathic
    rounds: int = 2

    def describe(self) -> str:
        names = "+".join(mode.value for mode in self.families)
        extra = f", rounds={self.rounds}" if Mode.bounded_exhaustive in self.families else ""
        return f"{names} ({self.communication.value}: {self.communication.assignment}{extra})"


def check_coalition(protocol: ProtocolSpec, coalition) -> frozenset[AgentId]:
    coalition = frozenset(coalition)
    agents = set(protocol.topology.agents)
    if not coalition or not coalition < agents:
        raise ConfigInvalid(f"coalition {sorted(coalition)} must be a non-empty proper subset of the agents")
    return coalition


def coalition_links(protocol: ProtocolSpec, coalition) -> list[Link]:
    """Every (member, honest neighbor) link in canonical order."""
    return [
        (k, h)
        for k in sorted(coalition)
        for h in protocol.topology.neighbors(k)
        if h not in coalition
    ]


def payload_alphabet(
    protocol: ProtocolSpec,
    link: Link,
    distribution: Optional[Sequence] = None,
    cap: Optional[int] = None,
) -> tuple[Optional[Payload], ...]:
    """Payloads seen on the link in honest runs, plus EMPTY and silence."""

    k, h = link
    seen = {EMPTY}
    for execution in enumerate_executions(protocol, distribution=distribution, cap=cap):
        for by_agent in execution.trace.rounds:
            payload = by_agent[k].outgoing_to(h)
            if payload is not None:
                seen.add(payload)
    return (None,) + tuple(sorted(seen, key=repr))


def random_claims(protocol: ProtocolSpec, coalition) -> list[Optional[tuple[tuple[AgentId, tuple], ...]]]:
    """
    Claimed round-0 selections for the coalition, one per residue of the claimed
    publics' sum mod n. Protocols without a public random yield [None]: the
    coalition then keeps its real draw.
    """

    values = [value for value, _ in protocol.domain(0)]
    publics = [v for v in values if isinstance(v, tuple) and v[0] is not None and v[1] == 0]
    if not publics:
        return [None]
    members = sorted(coalition)
    n = protocol.topology.n
    by_residue: dict[int, tuple] = {}
    for combo in product(publics, repeat=len(members)):
        residue = sum(value[0] for value in combo) % n
        by_residue.setdefault(residue, tuple((k, (value,)) for k, value in zip(members, combo)))
    return [by_residue[residue] for residue in sorted(by_residue)]


def _world(members, claims, randomness) -> World:
    return World(inputs=tuple(zip(members, claims)), randomness=randomness or ())


def _world_pairs(protocol: ProtocolSpec, coalition) -> list[tuple[World, World]]:
    members = sorted(coalition)
    claims = list(product(range(protocol.r), repeat=len(members)))
    randoms = random_claims(protocol, coalition)
    if randoms == [None]:
        return [
            (_world(members, a, None), _world(members, b, None))
            for a, b in combinations(claims, 2)
        ]
    pairs = []
    # the two ways two views can disagree: randoms (so leaders) or inputs
    for c in claims:
        for ra, rb in combinations(randoms, 2):
            pairs.append((_world(members, c, ra), _world(members, c, rb)))
    for ra in randoms:
        for ca, cb in combinations(claims, 2):
            pairs.append((_world(members, ca, ra), _world(members, cb, ra)))
    return pairs


def _assignments(protocol: ProtocolSpec, coalition, communication: Communication):
    links = coalition_links(protocol, coalition)
    if communication is Communication.telepathic:
        for bits in product((0, 1), repeat=len(links)):
            if len(set(bits)) > 1:
                yield tuple(zip(links, bits))
        return
    targets = sorted({h for _, h in links})
    for bits in product((0, 1), repeat=len(targets)):
        if len(set(bits)) > 1:
            shown = dict(zip(targets, bits))
            yield tuple((link, shown[link[1]]) for link in links)


def split_view_strategies(
    protocol: ProtocolSpec, coalition, communication: Communication
) -> list[CoalitionStrategy]:
    coalition = frozenset(coalition)
    return [
        CoalitionStrategy(
            coalition=coalition,
            mode=Mode.split_view,
            communication=communication,
            worlds=pair,
            assignment=assignment,
        )
        for pair in _world_pairs(protocol, coalition)
        for assignment in _assignments(protocol, coalition, communication)
    ]


def withhold_strategies(protocol: ProtocolSpec, coalition, communication: Communication) -> list[CoalitionStrategy]:
    coalition = frozenset(coalition)
    links = coalition_links(protocol, coalition)
    entries: list[frozenset] = []
    for t in range(protocol.rounds_bound - 1):
        entries.extend(frozenset({(t, k, h)}) for k, h in links)
        if len(links) > 1:
            entries.append(frozenset((t, k, h) for k, h in links))
    return [
        CoalitionStrategy(coalition=coalition, mode=Mode.withhold, communication=communication, withheld=e)
        for e in entries
    ]


def bounded_strategies(
    protocol: ProtocolSpec,
    coalition,
    rounds: int,
    communication: Communication,
    distribution: Optional[Sequence] = None,
    cap: Optional[int] = None,
) -> list[CoalitionStrategy]:
    coalition = frozenset(coalition)
    cap = settings.enumeration_cap if cap is None else cap
    links = coalition_links(protocol, coalition)
    alphabets = {link: payload_alphabet(protocol, link, distribution, cap) for link in links}
    slots = [(t, k, h) for t in range(rounds) for k, h in links]
    size = 1
    for _, k, h in slots:
        size *= len(alphabets[(k, h)])
    if size > cap:
        raise EnumerationCapExceeded(size, cap)
    logger.info("bounded-exhaustive space: %d schedules over %d slots", size, len(slots))
    return [
        CoalitionStrategy(
            coalition=coalition,
            mode=Mode.bounded_exhaustive,
            communication=communication,
            schedule=tuple(zip(slots, choice)),
            schedule_rounds=rounds,
        )
        for choice in product(*(alphabets[(k, h)] for _, k, h in slots))
    ]


def build_strategy_space(
    protocol: ProtocolSpec,
    coalition,
    space: StrategySpace = StrategySpace(),
    distribution: Optional[Sequence] = None,
    cap: Optional[int] = None,
) -> list[CoalitionStrategy]:
    """
    The build_strategy_space function lists every strategy of the requested families.

    :param protocol: ProtocolSpec: The protocol under attack
    :param coalition: Iterable[AgentId]: A non-empty proper subset of the agents
    :param space: StrategySpace: Families, communication mode and bounded horizon
    :param distribution: Optional[Sequence]: Input prior used to collect alphabets
    :param cap: Optional[int]: Bound on the bounded-exhaustive schedule count
    :return: Strategies in a fixed, reproducible order
    """

    coalition = check_coalition(protocol, coalition)
    strategies: list[CoalitionStrategy] = []
    members = sorted(coalition)
    if Mode.misreport in space.families:
        strategies.extend(
            misreport(coalition, dict(zip(members, claims)))
            for claims in product(range(protocol.r), repeat=len(members))
        )
    if Mode.split_view in space.families:
        strategies.extend(split_view_strategies(protocol, coalition, space.communication))
    if Mode.withhold in space.families:
        strategies.extend(withhold_strategies(protocol, coalition, space.communication))
    if Mode.bounded_exhaustive in space.families:
        strategies.extend(
            bounded_strategies(protocol, coalition, space.rounds, space.communication, distribution, cap)
        )
    logger.info("strategy space %s for coalition %s: %d strategies", space.describe(), members, len(strategies))
    return strategies


def split_leader_strategies(protocol: ProtocolSpec, i: AgentId, j: AgentId) -> list[CoalitionStrategy]:
    """
    Split views against the honest pair (i, j): both see the same claimed inputs
    but claimed randoms with different sums, so they elect different leaders.
    """

    coalition = frozenset(protocol.topology.agents) - {i, j}
    members = sorted(coalition)
    randoms = random_claims(protocol, coalition)
    if randoms == [None]:
        raise ConfigInvalid(f"{protocol.name} draws no public random to split")
    links = coalition_links(protocol, coalition)
    assignment = tuple((link, 0 if link[1] == i else 1) for link in links)
    return [
        CoalitionStrategy(
            coalition=coalition,
            mode=Mode.split_view,
            communication=Communication.link_limited,
            worlds=(_world(members, claims, ra), _world(members, claims, rb)),
            assignment=assignment,
        )
        for claims in product(range(protocol.r), repeat=len(members))
        for ra, rb in permutations(randoms, 2)
    ]
