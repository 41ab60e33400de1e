from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Hashable, Mapping, Optional

from src.core.topology import AgentId, Topology

Payload = Hashable


class _Token:
    """
    A named singleton payload/decision marker. It equals only itself, so a
    protocol payload spelled like the marker's name never collides with it.
    """

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __repr__(self):
        return self.name

    __str__ = __repr__

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    def __reduce__(self):
        return self.name


EMPTY = _Token("EMPTY")
BOTTOM = _Token("BOTTOM")
UNDECIDED = None

# (neighbor, payload-or-None) pairs sorted by neighbor; None is silence
LinkExperiences = tuple[tuple[AgentId, Optional[Payload]], ...]


def freeze_links(links: Mapping[AgentId, Optional[Payload]]) -> LinkExperiences:
    return tuple(sorted(links.items()))


@dataclass(frozen=True)
class MessageRecord:
    """One delivered message: payload, send round, sender and recipient."""

    payload: Payload
    round: int
    src: AgentId
    dst: AgentId


@dataclass(frozen=True)
class RoundRecord:
    agent: AgentId
    input: int
    incoming: LinkExperiences
    outgoing: LinkExperiences
    decision: Any = UNDECIDED

    def incoming_from(self, neighbor: AgentId) -> Optional[Payload]:
        return dict(self.incoming)[neighbor]

    def outgoing_to(self, neighbor: AgentId) -> Optional[Payload]:
        return dict(self.outgoing)[neighbor]


@dataclass(frozen=True)
class RandomnessChoice:
    """
    Per-agent, per-round selections from a protocol's randomness domain.

    selections[agent][round] is the chosen value, or None where the domain is empty.
    """

    selections: tuple[tuple[Any, ...], ...]
    probability: Fraction = Fraction(1)

    def selection(self, agent: AgentId, round_: int) -> Any:
        rounds = self.selections[agent]
        return rounds[round_] if round_ < len(rounds) else None


@dataclass(frozen=True)
class AgentRun:
    """A run seen from one agent, with its own random selections."""

    agent: AgentId
    rounds: tuple[RoundRecord, ...]
    randomness: tuple[Any, ...] = ()

    def prefix(self, t: int) -> "AgentRun":
        """Rounds 0..t; t = -1 gives the empty prefix."""
        return AgentRun(
            agent=self.agent,
            rounds=self.rounds[: max(t + 1, 0)],
            randomness=self.randomness[: max(t + 1, 0)],
        )

    def suffix(self, t: int) -> "AgentRun":
        """Rounds t to the end."""
        return AgentRun(
            agent=self.agent, rounds=self.rounds[t:], randomness=self.randomness[t:]
        )


@dataclass(frozen=True)
class Trace:
    topology: Topology
    inputs: tuple[int, ...]
    randomness: RandomnessChoice
    rounds: tuple[dict[AgentId, RoundRecord], ...]
    decisions: tuple[Any, ...]
    terminated_at: int
    coalition: frozenset[AgentId] = frozenset()
    final_states: tuple[Any, ...] = field(default=(), compare=False, repr=False)

    def record(self, agent: AgentId, round_: int) -> RoundRecord:
        return self.rounds[round_][agent]

    def messages(self) -> list[MessageRecord]:
        """Every delivered (non-silent) message in round, src, dst order."""
        found = []
        for t, by_agent in enumerate(self.rounds):
            for src in sorted(by_agent):
                for dst, payload in by_agent[src].outgoing:
                    if payload is not None:
                        found.append(MessageRecord(payload, t, src, dst))
        return found


AgentState = Any
Outgoing = Mapping[AgentId, Payload]
InitFn = Callable[[AgentId, int, Topology], AgentState]
StepFn = Callable[
    [AgentState, int, Mapping[AgentId, Optional[Payload]], Any],
    tuple[AgentState, Outgoing, Any],
]
FinishFn = Callable[[AgentState, int, Mapping[AgentId, Optional[Payload]]], AgentState]
RandomnessDomain = tuple[tuple[tuple[Any, Fraction], ...], ...]


def uniform_domain(values) -> tuple[tuple[Any, Fraction], ...]:
    values = tuple(values)
    return tuple((value, Fraction(1, len(values))) for value in values)


def uniform_distribution(r: int) -> tuple[Fraction, ...]:
    return tuple(Fraction(1, r) for _ in range(r))


@dataclass(frozen=True)
class ProtocolSpec:
    """
    An agent state machine over a fixed topology.

    randomness[t] is the finite domain each agent draws from in round t; an empty
    tuple (or a missing round) means the round is deterministic. step must be a
    pure function of its arguments and must keep its decision once it leaves
    UNDECIDED.
    """

    name: str
    topology: Topology
    r: int
    rounds_bound: int
    init: InitFn
    step: StepFn
    randomness: RandomnessDomain = ()
    distribution: tuple[Fraction, ...] = ()
    finish: Optional[FinishFn] = None
    empty_on_idle: bool = False

    def __post_init__(self):
        if not self.distribution:
            object.__setattr__(self, "distribution", uniform_distribution(self.r))

    @property
    def is_deterministic(self) -> bool:
        return all(len(domain) == 0 for domain in self.randomness)

    def domain(self, round_: int) -> tuple[tuple[Any, Fraction], ...]:
        return self.randomness[round_] if round_ < len(self.randomness) else ()


@dataclass(frozen=True)
class Outcome:
    legal: bool
    reason: Optional[str] = None

    def __str__(self):
        return "Legal" if self.legal else f"Erroneous({self.reason})"


LEGAL = Outcome(True)


@dataclass(frozen=True)
class Execution:
    inputs: tuple[int, ...]
    randomness: RandomnessChoice
    trace: Trace
    probability: Fraction
