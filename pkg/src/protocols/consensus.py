from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import reduce
from operator import xor
from typing import Hashable, Optional, Sequence

from src.core.models import BOTTOM, ProtocolSpec, RandomnessChoice
from src.core.topology import AgentId, Topology
from src.errors import InvalidInput, OutOfRangeRandom
from src.protocols.transport import Knowledge, make_sharing_protocol


@dataclass(frozen=True)
class KnowledgeTriple:
    input: int
    random: int
    id: Hashable


class KnowledgeCheck(str, Enum):
    ok = "ok"
    abort = "abort"


def validate_knowledge(triples: Sequence[KnowledgeTriple], n: int, r: int = 2) -> KnowledgeCheck:
    """Abort on an input outside 0..r-1, a random outside 1..n, or a repeated id."""

    if len(triples) != n:
        return KnowledgeCheck.abort
    for triple in triples:
        if isinstance(triple.input, bool) or not isinstance(triple.input, int):
            return KnowledgeCheck.abort
        if not 0 <= triple.input < r:
            return KnowledgeCheck.abort
        if isinstance(triple.random, bool) or not isinstance(triple.random, int):
            return KnowledgeCheck.abort
        if not 1 <= triple.random <= n:
            return KnowledgeCheck.abort
    ids = [triple.id for triple in triples]
    if len(set(ids)) != len(ids):
        return KnowledgeCheck.abort
    return KnowledgeCheck.ok


def elect_leader(randoms: Sequence[int], ids: Sequence[Hashable]) -> Hashable:
    """
    The elect_leader function picks the L-th smallest id, L = (sum of randoms) mod n.

    :param randoms: Sequence[int]: One random in 1..n per agent
    :param ids: Sequence[Hashable]: Distinct agent ids
    :return: The id at 0-based position L of the ascending id list
    """

    n = len(ids)
    for value in randoms:
        if not 1 <= value <= n:
            raise OutOfRangeRandom(f"random {value} outside 1..{n}")
    return sorted(ids)[sum(randoms) % n]


def _in_range(knowledge: Knowledge, r: int) -> bool:
    return all(
        isinstance(value, int) and not isinstance(value, bool) and 0 <= value < r
        for value, _ in knowledge
    )


def _triples(knowledge: Knowledge) -> Optional[list[KnowledgeTriple]]:
    triples = []
    for value, public in knowledge:
        if not isinstance(public, tuple) or len(public) != 2:
            return None
        triples.append(KnowledgeTriple(input=value, random=public[0], id=public[1]))
    return triples


def make_ris_two_path(
    topology: Topology, r: int = 2, randomized: bool = True, distribution: Sequence[Fraction] = ()
) -> ProtocolSpec:
    """Input sharing only: every agent decides the reconstructed input vector."""

    def decide(agent: AgentId, knowledge: Knowledge):
        if not _in_range(knowledge, r):
            return BOTTOM
        return tuple(value for value, _ in knowledge)

    return make_sharing_protocol(
        "ris", topology, r, decide, randomized=randomized, distribution=distribution
    )


def make_xor_consensus(
    topology: Topology, distribution: Sequence[Fraction] = (), randomized: bool = True
) -> ProtocolSpec:
    def decide(agent: AgentId, knowledge: Knowledge):
        if not _in_range(knowledge, 2):
            return BOTTOM
        return reduce(xor, (value for value, _ in knowledge), 0)

    return make_sharing_protocol(
        "xor-consensus", topology, 2, decide, randomized=randomized, distribution=distribution
    )


def _leader_rule(n: int, r: int, pick):
    def decide(agent: AgentId, knowledge: Knowledge):
        triples = _triples(knowledge)
        if triples is None or validate_knowledge(triples, n, r) is KnowledgeCheck.abort:
            return BOTTOM
        leader = elect_leader([t.random for t in triples], [t.id for t in triples])
        return pick(triples, leader)

    return decide


def make_algorithm1(
    topology: Topology, distribution: Sequence[Fraction] = (), randomized: bool = True
) -> ProtocolSpec:
    """
    Binary consensus by leader exclusion: every agent shares <input, random, id>,
    validates the collected triples, elects a leader from the randoms and decides
    the XOR of every input except the leader's.
    """

    n = topology.n
    decide = _leader_rule(
        n, 2, lambda triples, leader: reduce(xor, (t.input for t in triples if t.id != leader), 0)
    )
    return make_sharing_protocol(
        "algorithm1",
        topology,
        2,
        decide,
        public_of=lambda agent, drawn: (drawn, agent),
        public_domain=range(1, n + 1),
        randomized=randomized,
        distribution=distribution,
    )


class MultivaluedRule(str, Enum):
    min_input = "min-input"
    leader_input = "leader-input"


def make_candidate_multivalued(
    topology: Topology,
    r: int,
    rule: MultivaluedRule | str,
    distribution: Sequence[Fraction] = (),
    randomized: bool = True,
) -> ProtocolSpec:
    if r < 3:
        raise InvalidInput(f"multi-valued candidates need r >= 3, got {r}")
    rule = MultivaluedRule(rule)
    if rule is MultivaluedRule.min_input:

        def decide(agent: AgentId, knowledge: Knowledge):
            if not _in_range(knowledge, r):
                return BOTTOM
            return min(value for value, _ in knowledge)

        return make_sharing_protocol(
            "mv-min",
            topology,
            r,
            decide,
            secret_of=lambda input_: input_ % r,
            randomized=randomized,
            distribution=distribution,
        )

    n = topology.n
    decide = _leader_rule(
        n, r, lambda triples, leader: next(t.input for t in triples if t.id == leader)
    )
    return make_sharing_protocol(
        "mv-leader",
        topology,
        r,
        decide,
        secret_of=lambda input_: input_ % r,
        public_of=lambda agent, drawn: (drawn, agent),
        public_domain=range(1, n + 1),
        randomized=randomized,
        distribution=distribution,
    )


def leader_randomness(
    protocol: ProtocolSpec, randoms: Sequence[int], masks: Optional[Sequence[int]] = None
) -> RandomnessChoice:
    """A RandomnessChoice fixing every agent's public random (and ring mask)."""

    masks = masks or [0] * len(randoms)
    return RandomnessChoice(
        selections=tuple(((randoms[a], masks[a]),) for a in protocol.topology.agents)
    )
