import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import lru_cache, reduce
from itertools import product
from operator import xor
from typing import Any, Iterable, Optional, Sequence

from src.core.engine import default_randomness, enumerate_executions, execute, project
from src.core.models import (
    EMPTY,
    AgentRun,
    MessageRecord,
    Payload,
    ProtocolSpec,
    Trace,
)
from src.core.topology import AgentId, Topology, distances_without
from src.errors import (
    AmbiguousDecoding,
    DecodingMismatch,
    InconsistentObservation,
    InvalidInput,
    MessageNotInTrace,
    NondeterministicProtocol,
    NotAXorProtocol,
)

logger = logging.getLogger(__name__)


def _is_message(payload: Optional[Payload]) -> bool:
    return payload is not None and payload is not EMPTY


def recv_set(trace: Trace, senders: Iterable[AgentId], t: int) -> frozenset[AgentId]:
    """Agents that got at least one non-EMPTY message from the senders in round t."""

    if not 0 <= t < len(trace.rounds):
        return frozenset()
    return frozenset(
        dst
        for src in senders
        for dst, payload in trace.rounds[t][src].outgoing
        if _is_message(payload)
    )


@dataclass(frozen=True)
class AffSet:
    """per_round[k] is the set of agents affected by the message k rounds after it was sent."""

    message: MessageRecord
    per_round: tuple[frozenset[AgentId], ...]

    def at(self, t: int) -> frozenset[AgentId]:
        if t < self.message.round:
            raise InvalidInput(f"round {t} precedes the message (round {self.message.round})")
        return self.per_round[min(t - self.message.round, len(self.per_round) - 1)]


def aff_set(trace: Trace, message: MessageRecord) -> AffSet:
    if message not in trace.messages():
        raise MessageNotInTrace(f"{message} was not delivered in this trace")
    affected = frozenset({message.dst})
    per_round = [affected]
    for t in range(message.round + 1, len(trace.rounds)):
        affected = affected | recv_set(trace, affected, t)
        per_round.append(affected)
    return AffSet(message=message, per_round=tuple(per_round))


def affected_set(trace: Trace, message: MessageRecord, t: int) -> frozenset[AgentId]:
    return aff_set(trace, message).at(t)


def aff_of(trace: Trace, agent: AgentId) -> frozenset[MessageRecord]:
    """Every delivered message whose effect reaches the agent by the end of the run."""

    messages = trace.messages()
    return frozenset(m for m in messages if agent in aff_set(trace, m).per_round[-1])


class Sharing(str, Enum):
    none = "none"
    coalition = "coalition"


@dataclass(frozen=True)
class KnowledgeState:
    observer: AgentId
    round: int
    target: AgentId
    posterior: tuple[tuple[int, Fraction], ...]
    basis: tuple[int, ...]

    def probability(self, value: int) -> Fraction:
        return dict(self.posterior).get(value, Fraction(0))


class RunIndex:
    """
    Every enumerated run of a protocol with its per-agent projections, grouped on
    demand by what an observer knows at the beginning of a round.
    """

    def __init__(self, protocol: ProtocolSpec, distribution: Optional[tuple] = None, cap: Optional[int] = None):
        self.protocol = protocol
        self.agents = protocol.topology.agents
        self.prior = tuple(distribution) if distribution else protocol.distribution
        self.executions = enumerate_executions(protocol, distribution=self.prior, cap=cap)
        self.views = [{a: project(e.trace, a) for a in self.agents} for e in self.executions]
        self._groups: dict[tuple, dict[tuple, list[int]]] = {}
        self._posteriors: dict[tuple, tuple[dict[int, Fraction], ...]] = {}
        self._distances: dict[AgentId, dict] = {}

    def distances(self, removed: AgentId) -> dict[AgentId, dict[AgentId, int]]:
        if removed not in self._distances:
            self._distances[removed] = distances_without(self.protocol.topology, removed)
        return self._distances[removed]

    def observation(self, views, observer: AgentId, t: int, sharing: Sharing, target: AgentId) -> tuple:
        """
        Own prefix up to round t-1, plus, under coalition sharing, each other
        non-target agent's rounds up to t - dist - 1.
        """
        own = views[observer].prefix(t - 1)
        if sharing is Sharing.none:
            return (own,)
        reach = self.distances(target).get(observer, {})
        shared = []
        for k in self.agents:
            if k in (observer, target) or k not in reach:
                continue
            horizon = t - reach[k] - 1
            if horizon >= 0:
                shared.append((k, views[k].prefix(horizon)))
        return (own, tuple(shared))

    def group(self, observer: AgentId, t: int, sharing: Sharing, target: AgentId, key: tuple) -> list[int]:
        slot = (observer, t, sharing, target if sharing is Sharing.coalition else None)
        if slot not in self._groups:
            groups: dict[tuple, list[int]] = defaultdict(list)
            for run, views in enumerate(self.views):
                groups[self.observation(views, observer, t, sharing, target)].append(run)
            self._groups[slot] = groups
        return self._groups[slot].get(key, [])

    def posterior(self, runs: Sequence[int], target: AgentId) -> dict[int, Fraction]:
        mass: dict[int, Fraction] = defaultdict(Fraction)
        for run in runs:
            execution = self.executions[run]
            mass[execution.inputs[target]] += execution.probability
        total = sum(mass.values(), Fraction(0))
        return {value: p / total for value, p in sorted(mass.items())}

    def knows(self, views, observer: AgentId, target: AgentId, t: int, sharing: Sharing) -> bool:
        key = self.observation(views, observer, t, sharing, target)
        slot = (observer, target, t, sharing, key)
        if slot not in self._posteriors:
            runs = self.group(observer, t, sharing, target, key)
            if not runs:
                raise InconsistentObservation(f"agent {observer}'s view at round {t} matches no enumerated run")
            self._posteriors[slot] = (self.posterior(runs, target),)
        posterior = self._posteriors[slot][0]
        return any(p > self.prior[value] for value, p in posterior.items())

    def knowers(self, views, target: AgentId, t: int, sharing: Sharing = Sharing.none) -> frozenset[AgentId]:
        return frozenset(
            j for j in self.agents if j != target and self.knows(views, j, target, t, sharing)
        )


@lru_cache(maxsize=32)
def run_index(protocol: ProtocolSpec, distribution: Optional[tuple] = None, cap: Optional[int] = None) -> RunIndex:
    return RunIndex(protocol, distribution, cap)


def posterior(
    protocol: ProtocolSpec,
    topology: Topology,
    prefix: AgentRun,
    target: AgentId,
    shared: Sequence[tuple[AgentId, AgentRun]] = (),
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> KnowledgeState:
    """
    The posterior function computes the distribution of the target's input over
    every enumerated run consistent with the observer's prefix and the shared
    observations.

    :param protocol: ProtocolSpec: The protocol every agent follows
    :param topology: Topology: The network (must be the protocol's)
    :param prefix: AgentRun: The observer's rounds 0..t-1 with its own draws
    :param target: AgentId: The agent whose input is guessed
    :param shared: Sequence[tuple[AgentId, AgentRun]]: Prefixes other agents passed on
    :param distribution: Optional[Sequence[Fraction]]: Input prior
    :param cap: Optional[int]: Enumeration cap
    :return: A KnowledgeState at the beginning of round t
    """

    if topology != protocol.topology:
        raise InvalidInput("posterior needs the protocol's own topology")
    index = run_index(protocol, tuple(distribution) if distribution else None, cap)
    depth = len(prefix.rounds) - 1
    basis = [
        run
        for run, views in enumerate(index.views)
        if views[prefix.agent].prefix(depth) == prefix
        and all(views[k].prefix(len(obs.rounds) - 1) == obs for k, obs in shared)
    ]
    if not basis:
        raise InconsistentObservation("no enumerated run is consistent with the observation")
    return KnowledgeState(
        observer=prefix.agent,
        round=depth + 1,
        target=target,
        posterior=tuple(index.posterior(basis, target).items()),
        basis=tuple(basis),
    )


def knowers(
    protocol: ProtocolSpec,
    topology: Topology,
    trace: Trace,
    target: AgentId,
    round_: int,
    sharing: Sharing | str = Sharing.none,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> frozenset[AgentId]:
    """Agents whose view at the start of round_ makes some input value of target more likely than its prior."""

    if topology != protocol.topology:
        raise InvalidInput("knowers needs the protocol's own topology")
    index = run_index(protocol, tuple(distribution) if distribution else None, cap)
    views = {a: project(trace, a) for a in topology.agents}
    return index.knowers(views, target, round_, Sharing(sharing))


@dataclass(frozen=True)
class ResilienceViolation:
    receiver: AgentId
    sender: AgentId
    round: int
    inputs: tuple[int, ...]
    payload: Any


@dataclass(frozen=True)
class ResilienceReport:
    protocol: str
    runs: int
    violations: tuple[ResilienceViolation, ...]
    initial_knowledge_empty: bool
    input_sharing: bool
    sharing: Sharing = Sharing.coalition

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_document(self) -> dict:
        return {
            "check": "ris-resilience",
            "protocol": self.protocol,
            "runs": self.runs,
            "sharing": self.sharing.value,
            "result": "PASS" if self.passed else "FAIL",
            "initial_knowledge_empty": self.initial_knowledge_empty,
            "input_sharing": self.input_sharing,
            "violations": [
                {
                    "receiver": v.receiver,
                    "sender": v.sender,
                    "round": v.round,
                    "inputs": list(v.inputs),
                    "payload": repr(v.payload),
                }
                for v in self.violations
            ],
        }


_ENDED = object()


def verify_ris_resilience(
    protocol: ProtocolSpec,
    topology: Optional[Topology] = None,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
    sharing: Sharing | str = Sharing.coalition,
) -> ResilienceReport:
    """
    Check that no agent ever hears something unpredictable from an agent that
    already knows its input. A message from j to i in round t passes when every
    run consistent with i's rounds 0..t-1 carries the same payload on that link.

    Knowers are computed with what their fellow agents could have passed on to
    them by round t unless sharing is "none".
    """

    index = run_index(protocol, tuple(distribution) if distribution else None, cap)
    topology = topology or protocol.topology
    sharing = Sharing(sharing)
    forced: dict[tuple, bool] = {}
    violations = []
    initial_empty = True
    input_sharing = True

    for views, execution in zip(index.views, index.executions):
        trace = execution.trace
        horizon = len(trace.rounds)
        for i in topology.agents:
            if index.knowers(views, i, 0, sharing):
                initial_empty = False
            for t in range(1, horizon):
                know = index.knowers(views, i, t, sharing) & set(topology.neighbors(i))
                if not know:
                    continue
                key = index.observation(views, i, t, Sharing.none, i)
                for j in sorted(know):
                    slot = (i, t, key, j)
                    if slot not in forced:
                        seen = {
                            index.executions[run].trace.rounds[t][i].incoming_from(j)
                            if t < len(index.executions[run].trace.rounds)
                            else _ENDED
                            for run in index.group(i, t, Sharing.none, i, key)
                        }
                        forced[slot] = len(seen) == 1
                    if not forced[slot]:
                        violations.append(
                            ResilienceViolation(i, j, t, execution.inputs, trace.rounds[t][i].incoming_from(j))
                        )
            for target in topology.agents:
                if target == i:
                    continue
                key = index.observation(views, i, horizon, Sharing.none, target)
                runs = index.group(i, horizon, Sharing.none, target, key)
                if len({index.executions[run].inputs[target] for run in runs}) != 1:
                    input_sharing = False

    logger.info(
        "%s: %d resilience violations over %d runs (%s sharing)",
        protocol.name,
        len(violations),
        len(index.executions),
        sharing.value,
    )
    return ResilienceReport(
        protocol=protocol.name,
        runs=len(index.executions),
        violations=tuple(violations),
        initial_knowledge_empty=initial_empty,
        input_sharing=input_sharing,
        sharing=sharing,
    )


@dataclass(frozen=True)
class EncodingWitness:
    agent: AgentId
    own_input: int
    decision: Any
    inputs_a: tuple[int, ...]
    inputs_b: tuple[int, ...]
    trace_a: Trace = field(compare=False, repr=False)
    trace_b: Trace = field(compare=False, repr=False)


@dataclass(frozen=True)
class EncodingReport:
    protocol: str
    runs: int
    witness: Optional[EncodingWitness]

    @property
    def passed(self) -> bool:
        return self.witness is None

    def to_document(self) -> dict:
        witness = None
        if self.witness is not None:
            witness = {
                "agent": self.witness.agent,
                "own_input": self.witness.own_input,
                "decision": self.witness.decision,
                "inputs_a": list(self.witness.inputs_a),
                "inputs_b": list(self.witness.inputs_b),
            }
        return {
            "check": "encoding",
            "protocol": self.protocol,
            "runs": self.runs,
            "result": "PASS" if self.passed else "FAIL",
            "witness": witness,
        }


def verify_input_encoding(
    protocol: ProtocolSpec,
    topology: Optional[Topology] = None,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> EncodingReport:
    """
    The verify_input_encoding function checks that an agent's input, decision and
    the messages that affected it pin down every other input.

    :param protocol: ProtocolSpec: A protocol whose every decision is the XOR of the inputs
    :param topology: Optional[Topology]: Defaults to the protocol's
    :param distribution: Optional[Sequence[Fraction]]: Input prior
    :param cap: Optional[int]: Enumeration cap
    :return: An EncodingReport, failing with the first witness pair found
    """

    topology = topology or protocol.topology
    executions = enumerate_executions(protocol, topology, distribution, cap)
    for execution in executions:
        parity = reduce(xor, execution.inputs, 0)
        if any(d != parity for d in execution.trace.decisions):
            raise NotAXorProtocol(f"{protocol.name} decided {execution.trace.decisions} on {execution.inputs}")

    seen: dict[tuple, Any] = {}
    for execution in executions:
        trace = execution.trace
        for i in topology.agents:
            key = (i, execution.inputs[i], trace.decisions[i], aff_of(trace, i))
            others = tuple(v for a, v in enumerate(execution.inputs) if a != i)
            if key not in seen:
                seen[key] = (others, execution)
                continue
            first_others, first = seen[key]
            if first_others != others:
                logger.info("%s: agent %s cannot tell %s from %s", protocol.name, i, first.inputs, execution.inputs)
                return EncodingReport(
                    protocol=protocol.name,
                    runs=len(executions),
                    witness=EncodingWitness(
                        agent=i,
                        own_input=execution.inputs[i],
                        decision=trace.decisions[i],
                        inputs_a=first.inputs,
                        inputs_b=execution.inputs,
                        trace_a=first.trace,
                        trace_b=trace,
                    ),
                )
    return EncodingReport(protocol=protocol.name, runs=len(executions), witness=None)


@dataclass(frozen=True)
class Piggyback:
    payload: Payload
    buffer: frozenset[MessageRecord]


@dataclass(frozen=True)
class PiggybackState:
    agent: AgentId
    inner: Any
    buffer: frozenset[MessageRecord] = frozenset()


def _absorb(state: PiggybackState, round_: int, incoming) -> tuple[PiggybackState, dict]:
    """Record the messages sent to this agent in round round_-1 and merge their buffers."""
    unwrapped = {}
    buffer = set(state.buffer)
    for src, message in incoming.items():
        if isinstance(message, Piggyback):
            buffer |= message.buffer
            message = message.payload
        if message is not None:
            buffer.add(MessageRecord(message, round_ - 1, src, state.agent))
        unwrapped[src] = message
    return replace(state, buffer=frozenset(buffer)), unwrapped


def ris_transform(protocol: ProtocolSpec) -> ProtocolSpec:
    """
    Wrap a deterministic protocol so every message also carries the sender's
    buffer of every message record it has seen. Payloads, schedule and
    decisions are unchanged; final states expose each agent's buffer.
    """

    if not protocol.is_deterministic:
        raise NondeterministicProtocol(
            f"{protocol.name} draws randomness; only deterministic protocols can be wrapped"
        )

    def init(agent: AgentId, input_: int, topology: Topology) -> PiggybackState:
        return PiggybackState(agent=agent, inner=protocol.init(agent, input_, topology))

    def step(state: PiggybackState, round_: int, incoming, selection):
        state, unwrapped = _absorb(state, round_, incoming)
        inner, sent, decision = protocol.step(state.inner, round_, unwrapped, selection)
        wrapped = {
            dst: None if payload is None else Piggyback(payload, state.buffer)
            for dst, payload in sent.items()
        }
        return replace(state, inner=inner), wrapped, decision

    def finish(state: PiggybackState, round_: int, incoming) -> PiggybackState:
        state, unwrapped = _absorb(state, round_, incoming)
        if protocol.finish is not None:
            state = replace(state, inner=protocol.finish(state.inner, round_, unwrapped))
        return state

    return replace(protocol, name=f"{protocol.name}+piggyback", init=init, step=step, finish=finish)


def _strip(links) -> tuple:
    return tuple((b, m.payload if isinstance(m, Piggyback) else m) for b, m in links)


def strip_buffers(trace: Trace) -> Trace:
    """The trace with every piggybacked buffer removed."""

    rounds = tuple(
        {
            a: replace(record, incoming=_strip(record.incoming), outgoing=_strip(record.outgoing))
            for a, record in by_agent.items()
        }
        for by_agent in trace.rounds
    )
    return replace(trace, rounds=rounds, final_states=())


@lru_cache(maxsize=16)
def _decoding_table(protocol: ProtocolSpec, topology: Topology):
    transformed = ris_transform(protocol)
    rc = default_randomness(transformed)
    table = []
    for candidate in product(range(protocol.r), repeat=topology.n):
        trace = execute(transformed, topology, candidate, rc)
        table.append((candidate, trace.decisions, tuple(s.buffer for s in trace.final_states)))
    return tuple(table)


def decode_inputs(
    own_input: int,
    decision: Any,
    buffer: frozenset[MessageRecord],
    protocol: ProtocolSpec,
    topology: Topology,
    agent: AgentId,
) -> tuple[int, ...]:
    """
    The decode_inputs function recovers the full input vector from what one agent
    holds after a run of the wrapped protocol.

    :param own_input: int: The agent's input
    :param decision: Any: The agent's decision
    :param buffer: frozenset[MessageRecord]: The agent's final piggyback buffer
    :param protocol: ProtocolSpec: The underlying deterministic protocol
    :param topology: Topology: The network
    :param agent: AgentId: Who is decoding
    :return: The unique consistent input vector
    """

    survivors = [
        candidate
        for candidate, decisions, buffers in _decoding_table(protocol, topology)
        if candidate[agent] == own_input and decisions[agent] == decision and buffers[agent] == buffer
    ]
    if not survivors:
        raise DecodingMismatch(f"no input vector reproduces agent {agent}'s buffer")
    if len(survivors) > 1:
        raise AmbiguousDecoding(f"agent {agent}'s buffer fits {len(survivors)} input vectors: {survivors}")
    return survivors[0]


@dataclass(frozen=True)
class SilenceFlag:
    receiver: AgentId
    sender: AgentId
    round: int
    silent_inputs: tuple[int, ...]
    other_inputs: tuple[int, ...]
    other_payload: Any
    silent_trace: Optional[Trace] = field(default=None, compare=False, repr=False)
    other_trace: Optional[Trace] = field(default=None, compare=False, repr=False)


def _suffix_distribution(runs: list[tuple[AgentRun, Fraction]]) -> dict:
    mass: dict[AgentRun, Fraction] = defaultdict(Fraction)
    for suffix, weight in runs:
        mass[suffix] += weight
    total = sum(mass.values(), Fraction(0))
    return {suffix: p / total for suffix, p in mass.items()}


def detect_informative_silences(
    protocol: ProtocolSpec,
    topology: Optional[Topology] = None,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> list[SilenceFlag]:
    """
    Flag every (receiver, sender, round) where silence on the link is an
    informative link experience: runs that agree on the receiver's history and on
    everything else it did and experienced that round, but differ on that link,
    lead to different distributions over the receiver's future.
    """

    topology = topology or protocol.topology
    executions = enumerate_executions(protocol, topology, distribution, cap)
    groups: dict[tuple, dict[Any, list]] = defaultdict(lambda: defaultdict(list))
    for execution in executions:
        trace = execution.trace
        for i in topology.agents:
            run = project(trace, i)
            for t, record in enumerate(run.rounds):
                for j in topology.neighbors(i):
                    others = tuple((b, m) for b, m in record.incoming if b != j)
                    key = (i, j, t, run.prefix(t - 1), others, record.outgoing, record.decision)
                    groups[key][record.incoming_from(j)].append(
                        (run.suffix(t + 1), execution.probability, execution)
                    )

    flags: dict[tuple, SilenceFlag] = {}
    for (i, j, t, *_), by_experience in groups.items():
        if None not in by_experience or (i, j, t) in flags:
            continue
        silent = by_experience[None]
        quiet = _suffix_distribution([(s, w) for s, w, _ in silent])
        witness = silent[0][2]
        for payload, runs in sorted(by_experience.items(), key=lambda kv: repr(kv[0])):
            if payload is None:
                continue
            if _suffix_distribution([(s, w) for s, w, _ in runs]) != quiet:
                other = runs[0][2]
                flags[(i, j, t)] = SilenceFlag(
                    i, j, t, witness.inputs, other.inputs, payload, witness.trace, other.trace
                )
                break
    found = [flags[key] for key in sorted(flags)]
    logger.info("%s: %d informative silent link experiences", protocol.name, len(found))
    return found


@dataclass(frozen=True)
class _Idle:
    agent: AgentId
    inner: Any


def rewrite_with_empty(protocol: ProtocolSpec) -> ProtocolSpec:
    """Send EMPTY wherever the protocol would stay silent; idempotent."""

    if protocol.empty_on_idle:
        return protocol
    topology = protocol.topology

    def init(agent: AgentId, input_: int, topology_: Topology) -> _Idle:
        return _Idle(agent, protocol.init(agent, input_, topology_))

    def step(state: _Idle, round_: int, incoming, selection):
        inner, sent, decision = protocol.step(state.inner, round_, incoming, selection)
        filled = {b: EMPTY if sent.get(b) is None else sent[b] for b in topology.neighbors(state.agent)}
        return _Idle(state.agent, inner), filled, decision

    finish = None
    if protocol.finish is not None:

        def finish(state: _Idle, round_: int, incoming) -> _Idle:
            return _Idle(state.agent, protocol.finish(state.inner, round_, incoming))

    return replace(protocol, name=f"{protocol.name}+empty", init=init, step=step, finish=finish, empty_on_idle=True)


def silence_document(protocol: ProtocolSpec, flags: Sequence[SilenceFlag]) -> dict:
    return {
        "check": "silences",
        "protocol": protocol.name,
        "result": "PASS" if not flags else "FAIL",
        "flags": [
            {
                "receiver": f.receiver,
                "sender": f.sender,
                "round": f.round,
                "silent_inputs": list(f.silent_inputs),
                "other_inputs": list(f.other_inputs),
                "other_payload": repr(f.other_payload),
            }
            for f in flags
        ],
    }
