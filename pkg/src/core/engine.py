import logging
import random
from abc import ABC, abstractmethod
from fractions import Fraction
from functools import lru_cache
from itertools import product
from math import lcm, prod
from typing import Any, Iterable, Iterator, Mapping, Optional, Sequence

from src.conf.config import settings
from src.core.models import (
    BOTTOM,
    LEGAL,
    UNDECIDED,
    AgentRun,
    Execution,
    Outcome,
    Payload,
    ProtocolSpec,
    RandomnessChoice,
    RoundRecord,
    Trace,
    freeze_links,
)
from src.core.topology import AgentId, Topology, check_two_vertex_connected
from src.errors import (
    EnumerationCapExceeded,
    IllegalSend,
    InvalidInput,
    ProtocolOverrun,
    TopologyNotBiconnected,
    UnknownAgent,
)

logger = logging.getLogger(__name__)

Links = Mapping[AgentId, Optional[Payload]]


class CoalitionController(ABC):
    """
    A joint controller for the deviating agents of one execution.

    The engine calls reset once, then act every round with the link experiences
    each member received in the previous round; act returns every member's
    outgoing payloads (missing neighbors are silent).
    """

    members: frozenset[AgentId]

    @abstractmethod
    def reset(self, inputs: Sequence[int], randomness: RandomnessChoice) -> None:
        ...

    @abstractmethod
    def act(
        self, round_: int, incoming: Mapping[AgentId, Links]
    ) -> dict[AgentId, dict[AgentId, Payload]]:
        ...


@lru_cache(maxsize=None)
def _biconnected(topology: Topology) -> bool:
    return check_two_vertex_connected(topology)


def _checked(topology: Topology, agent: AgentId, sent: Links) -> dict[AgentId, Optional[Payload]]:
    neighbors = topology.neighbors(agent)
    strays = set(sent) - set(neighbors)
    if strays:
        raise IllegalSend(f"agent {agent} addressed non-neighbors {sorted(strays)}")
    return {b: sent.get(b) for b in neighbors}


def execute(
    protocol: ProtocolSpec,
    topology: Topology,
    inputs: Sequence[int],
    randomness: RandomnessChoice,
    coalition: Optional[CoalitionController] = None,
) -> Trace:
    """
    The execute function runs all agents in lockstep synchronous rounds.

    A message sent in round t is part of its recipient's round-t incoming link
    experiences and is consumed by the recipient's step in round t+1.

    :param protocol: ProtocolSpec: The state machine every honest agent runs
    :param topology: Topology: A 2-vertex-connected network
    :param inputs: Sequence[int]: One input per agent
    :param randomness: RandomnessChoice: Selections from the protocol's domains
    :param coalition: Optional[CoalitionController]: Drives the deviating agents
    :return: The complete Trace
    """

    inputs = tuple(inputs)
    if len(inputs) != topology.n:
        raise InvalidInput(f"expected {topology.n} inputs, got {len(inputs)}")
    if not _biconnected(topology):
        raise TopologyNotBiconnected("simulation requires a 2-vertex-connected network")
    members = coalition.members if coalition is not None else frozenset()
    honest = [a for a in topology.agents if a not in members]
    for a in honest:
        if not 0 <= inputs[a] < protocol.r:
            raise InvalidInput(f"input {inputs[a]} of agent {a} outside 0..{protocol.r - 1}")

    states = {a: protocol.init(a, inputs[a], topology) for a in honest}
    if coalition is not None:
        coalition.reset(inputs, randomness)
    incoming: dict[AgentId, Links] = {
        a: {b: None for b in topology.neighbors(a)} for a in topology.agents
    }
    decisions: dict[AgentId, Any] = {a: UNDECIDED for a in topology.agents}
    rounds: list[dict[AgentId, RoundRecord]] = []

    for t in range(protocol.rounds_bound):
        outgoing: dict[AgentId, dict[AgentId, Optional[Payload]]] = {}
        for a in honest:
            states[a], sent, decision = protocol.step(
                states[a], t, incoming[a], randomness.selection(a, t)
            )
            outgoing[a] = _checked(topology, a, sent)
            if decisions[a] is UNDECIDED and decision is not UNDECIDED:
                decisions[a] = decision
        if coalition is not None:
            joint = coalition.act(t, {k: incoming[k] for k in members})
            for k in members:
                outgoing[k] = _checked(topology, k, joint.get(k, {}))
        delivered = {
            a: {b: outgoing[b][a] for b in topology.neighbors(a)} for a in topology.agents
        }
        finished = all(decisions[a] is not UNDECIDED for a in honest)
        if finished and members:
            mirrored = decisions[honest[0]]
            for k in members:
                decisions[k] = mirrored
        rounds.append(
            {
                a: RoundRecord(
                    agent=a,
                    input=inputs[a],
                    incoming=freeze_links(delivered[a]),
                    outgoing=freeze_links(outgoing[a]),
                    decision=decisions[a],
                )
                for a in topology.agents
            }
        )
        incoming = delivered
        if finished:
            break
    else:
        raise ProtocolOverrun(
            f"{protocol.name} did not terminate within {protocol.rounds_bound} rounds"
        )

    end = len(rounds) - 1
    final_states = tuple(
        None
        if a in members
        else protocol.finish(states[a], end + 1, incoming[a])
        if protocol.finish is not None
        else states[a]
        for a in topology.agents
    )
    return Trace(
        topology=topology,
        inputs=inputs,
        randomness=randomness,
        rounds=tuple(rounds),
        decisions=tuple(decisions[a] for a in topology.agents),
        terminated_at=end,
        coalition=members,
        final_states=final_states,
    )


def agent_randomness_options(protocol: ProtocolSpec) -> list[tuple[tuple[Any, ...], Fraction]]:
    """Every per-round selection sequence one agent can draw, with its probability."""

    per_round = [
        protocol.domain(t) or ((None, Fraction(1)),) for t in range(len(protocol.randomness))
    ]
    return [
        (tuple(value for value, _ in combo), prod((p for _, p in combo), start=Fraction(1)))
        for combo in product(*per_round)
    ]


def default_randomness(protocol: ProtocolSpec) -> RandomnessChoice:
    """The choice selecting the first value of every domain, for every agent."""

    first = agent_randomness_options(protocol)[0][0]
    return RandomnessChoice(selections=tuple(first for _ in protocol.topology.agents))


def fixed_randomness(protocol: ProtocolSpec, per_agent: Mapping[AgentId, Sequence[Any]]) -> RandomnessChoice:
    """A choice with explicit selections for some agents and first values elsewhere."""

    first = agent_randomness_options(protocol)[0][0]
    return RandomnessChoice(
        selections=tuple(
            tuple(per_agent[a]) if a in per_agent else first for a in protocol.topology.agents
        )
    )


def enumeration_size(
    protocol: ProtocolSpec, input_agents: Iterable[AgentId], random_agents: Iterable[AgentId]
) -> int:
    options = len(agent_randomness_options(protocol))
    return protocol.r ** len(list(input_agents)) * options ** len(list(random_agents))


def weighted_assignments(
    protocol: ProtocolSpec,
    input_agents: Sequence[AgentId],
    random_agents: Sequence[AgentId],
    fixed_inputs: Optional[Mapping[AgentId, int]] = None,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> Iterator[tuple[tuple[int, ...], RandomnessChoice, Fraction]]:
    """
    Yield (inputs, randomness, weight) over every assignment of the varying agents.

    Agents outside input_agents take their input from fixed_inputs; agents outside
    random_agents draw nothing (their selections are None with probability 1).
    """

    cap = settings.enumeration_cap if cap is None else cap
    size = enumeration_size(protocol, input_agents, random_agents)
    if size > cap:
        raise EnumerationCapExceeded(size, cap)
    distribution = tuple(distribution or protocol.distribution)
    fixed_inputs = dict(fixed_inputs or {})
    agents = protocol.topology.agents
    options = agent_randomness_options(protocol)
    silent_option = (tuple(None for _ in options[0][0]), Fraction(1))

    for values in product(range(protocol.r), repeat=len(input_agents)):
        chosen = dict(fixed_inputs)
        chosen.update(zip(input_agents, values))
        inputs = tuple(chosen[a] for a in agents)
        prior = prod((distribution[v] for v in values), start=Fraction(1))
        if prior == 0:
            continue
        for combo in product(options, repeat=len(random_agents)):
            drawn = dict(zip(random_agents, combo))
            picks = [drawn.get(a, silent_option) for a in agents]
            probability = prod((p for _, p in picks), start=Fraction(1))
            yield inputs, RandomnessChoice(tuple(s for s, _ in picks), probability), prior * probability


def enumerate_executions(
    protocol: ProtocolSpec,
    topology: Optional[Topology] = None,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> list[Execution]:
    """
    The enumerate_executions function runs the protocol on every input vector and
    every joint randomness choice.

    :param protocol: ProtocolSpec: The protocol to enumerate
    :param topology: Optional[Topology]: Defaults to the protocol's own topology
    :param distribution: Optional[Sequence[Fraction]]: Input prior, defaults to the protocol's
    :param cap: Optional[int]: Enumeration cap, defaults to settings.enumeration_cap
    :return: One Execution per (inputs, randomness); probabilities sum to exactly 1
    """

    topology = topology or protocol.topology
    agents = list(topology.agents)
    executions = [
        Execution(inputs, rc, execute(protocol, topology, inputs, rc), weight)
        for inputs, rc, weight in weighted_assignments(
            protocol, agents, agents, distribution=distribution, cap=cap
        )
    ]
    logger.info("enumerated %d executions of %s", len(executions), protocol.name)
    return executions


def _draw(rng: random.Random, options: Sequence[tuple[Any, Fraction]]) -> Any:
    denominator = lcm(*(p.denominator for _, p in options))
    ticket = rng.randrange(denominator)
    for value, p in options:
        ticket -= p.numerator * (denominator // p.denominator)
        if ticket < 0:
            return value
    return options[-1][0]


def sample_executions(
    protocol: ProtocolSpec,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    distribution: Optional[Sequence[Fraction]] = None,
) -> list[Execution]:
    """Seeded sampling fallback for enumerations above the cap; each sample weighs 1/samples."""

    samples = settings.sample_size if samples is None else samples
    rng = random.Random(settings.seed if seed is None else seed)
    distribution = tuple(distribution or protocol.distribution)
    topology = protocol.topology
    inputs_domain = tuple(zip(range(protocol.r), distribution))
    options = agent_randomness_options(protocol)
    logger.warning("sampling %d executions of %s", samples, protocol.name)
    executions = []
    for _ in range(samples):
        inputs = tuple(_draw(rng, inputs_domain) for _ in topology.agents)
        picks = [_draw(rng, options) for _ in topology.agents]
        rc = RandomnessChoice(tuple(picks), Fraction(1))
        executions.append(Execution(inputs, rc, execute(protocol, topology, inputs, rc), Fraction(1, samples)))
    return executions


def project(trace: Trace, agent: AgentId) -> AgentRun:
    """The agent's own rounds of the trace, from round 0 to termination."""

    if agent not in trace.topology.agents:
        raise UnknownAgent(f"agent {agent} is not in the trace")
    return AgentRun(
        agent=agent,
        rounds=tuple(by_agent[agent] for by_agent in trace.rounds),
        randomness=tuple(
            trace.randomness.selection(agent, t) for t in range(len(trace.rounds))
        ),
    )


def classify_decisions(inputs: Sequence[int], decisions: Sequence[Any]) -> Outcome:
    if any(d is UNDECIDED or d is BOTTOM for d in decisions):
        return Outcome(False, "termination")
    if len(set(decisions)) > 1:
        return Outcome(False, "agreement")
    if decisions[0] not in inputs:
        return Outcome(False, "validity")
    return LEGAL


def classify_outcome(trace: Trace) -> Outcome:
    """Legal iff agreement, validity and termination all hold."""

    return classify_decisions(trace.inputs, trace.decisions)


def same_transcript(a: Trace, b: Trace) -> bool:
    return (
        a.inputs == b.inputs
        and a.rounds == b.rounds
        and a.decisions == b.decisions
        and a.terminated_at == b.terminated_at
    )
