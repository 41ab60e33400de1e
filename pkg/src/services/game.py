import logging
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
from typing import Any, Callable, Iterable, Optional, Sequence

from src.core.engine import classify_decisions, execute, weighted_assignments
from src.core.export import rational
from src.core.models import BOTTOM, ProtocolSpec
from src.core.topology import AgentId
from src.errors import EmptyUniverse, InvalidInput, SolutionPreferenceViolated
from src.services.strategies import (
    CoalitionStrategy,
    StrategySpace,
    build_strategy_space,
    check_coalition,
    honest,
    make_controller,
    misreport,
    split_leader_strategies,
)

logger = logging.getLogger(__name__)

Outcomes = tuple[tuple[tuple[int, ...], tuple[Any, ...], Fraction], ...]


@dataclass(frozen=True)
class UtilityFunction:
    r: int
    payoff: Callable[[tuple[int, ...], tuple[Any, ...]], Fraction]
    name: str = "custom"

    def __call__(self, inputs, decisions) -> Fraction:
        return Fraction(self.payoff(tuple(inputs), tuple(decisions)))


def make_preference_utility(v: int, r: int) -> UtilityFunction:
    """
    The make_preference_utility function pays 1 when every agent decides v, v is
    somebody's input and the outcome is legal; it pays 0 otherwise.

    :param v: int: The preferred value, 0..r-1
    :param r: int: Number of input values
    :return: A UtilityFunction named prefer-v
    """

    if not 0 <= v < r:
        raise InvalidInput(f"preferred value {v} outside 0..{r - 1}")

    def payoff(inputs, decisions) -> Fraction:
        if not classify_decisions(inputs, decisions).legal:
            return Fraction(0)
        return Fraction(1) if decisions[0] == v and v in inputs else Fraction(0)

    return UtilityFunction(r=r, payoff=payoff, name=f"prefer-{v}")


def outcome_universe(r: int, n: int) -> list[tuple[tuple[int, ...], tuple[Any, ...]]]:
    """Every (inputs, decisions) pair with decisions over 0..r-1 and BOTTOM."""

    decisions = list(range(r)) + [BOTTOM]
    return [
        (inputs, outcome)
        for inputs in product(range(r), repeat=n)
        for outcome in product(decisions, repeat=n)
    ]


def check_solution_preference(u: UtilityFunction, universe: Sequence[tuple]) -> bool:
    """No erroneous outcome pays more than any legal outcome for the same inputs."""

    if not universe:
        raise EmptyUniverse("cannot check Solution Preference on an empty outcome universe")
    best_erroneous: dict[tuple, Fraction] = {}
    worst_legal: dict[tuple, Fraction] = {}
    for inputs, decisions in universe:
        paid = u(inputs, decisions)
        key = tuple(inputs)
        if classify_decisions(inputs, decisions).legal:
            worst_legal[key] = min(paid, worst_legal.get(key, paid))
        else:
            best_erroneous[key] = max(paid, best_erroneous.get(key, paid))
    return all(
        best_erroneous[key] <= worst_legal[key]
        for key in best_erroneous
        if key in worst_legal
    )


def require_solution_preference(u: UtilityFunction, n: int) -> UtilityFunction:
    if not check_solution_preference(u, outcome_universe(u.r, n)):
        raise SolutionPreferenceViolated(f"utility {u.name} pays more for an erroneous outcome")
    return u


@lru_cache(maxsize=4096)
def outcome_distribution(
    protocol: ProtocolSpec,
    strategy: CoalitionStrategy,
    distribution: Optional[tuple[Fraction, ...]] = None,
    cap: Optional[int] = None,
) -> Outcomes:
    """
    Exact (inputs, decisions, probability) triples for the protocol against a
    coalition strategy. Honest inputs follow the distribution; members' inputs are
    the strategy's claims when it fixes them and follow the distribution otherwise.
    """

    coalition = check_coalition(protocol, strategy.coalition)
    agents = protocol.topology.agents
    honest_agents = [a for a in agents if a not in coalition]
    fixed = strategy.fixed_inputs
    input_agents = honest_agents + [k for k in sorted(coalition) if k not in fixed]
    random_agents = list(agents) if strategy.uses_real_randomness else honest_agents
    controller = make_controller(protocol, strategy)
    outcomes = []
    for inputs, rc, weight in weighted_assignments(
        protocol, input_agents, random_agents, fixed, distribution, cap
    ):
        trace = execute(protocol, protocol.topology, inputs, rc, controller)
        outcomes.append((inputs, trace.decisions, weight))
    return tuple(outcomes)


def expected_utility(
    protocol: ProtocolSpec,
    strategy: CoalitionStrategy,
    u: UtilityFunction,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> Fraction:
    """
    The expected_utility function computes the exact expectation of u over honest
    inputs and every random draw, with the coalition driven by the strategy.

    :param protocol: ProtocolSpec: The protocol honest agents run
    :param strategy: CoalitionStrategy: How the coalition behaves
    :param u: UtilityFunction: The coalition's utility
    :param distribution: Optional[Sequence[Fraction]]: Input prior, defaults to the protocol's
    :param cap: Optional[int]: Enumeration cap
    :return: The expected utility as a Fraction
    """

    distribution = tuple(distribution) if distribution else None
    outcomes = outcome_distribution(protocol, strategy, distribution, cap)
    return sum(
        (weight * u(inputs, decisions) for inputs, decisions, weight in outcomes),
        Fraction(0),
    )


class Verdict(str, Enum):
    equilibrium = "no-profitable-deviation-found"
    deviation = "deviation-found"


@dataclass(frozen=True)
class Deviation:
    strategy: CoalitionStrategy
    eu: Fraction


@dataclass(frozen=True)
class EquilibriumReport:
    protocol: str
    coalition: frozenset[AgentId]
    utility: str
    space: str
    strategies_searched: int
    honest_eu: Fraction
    best_deviation: Optional[Deviation]
    verdict: Verdict

    def to_document(self) -> dict:
        best = None
        if self.best_deviation is not None:
            best = {
                "strategy": self.best_deviation.strategy.describe(),
                "mode": self.best_deviation.strategy.mode.value,
                "eu": rational(self.best_deviation.eu),
            }
        return {
            "protocol": self.protocol,
            "coalition": sorted(self.coalition),
            "utility": self.utility,
            "space": self.space,
            "strategies_searched": self.strategies_searched,
            "honest_eu": rational(self.honest_eu),
            "best_deviation": best,
            "verdict": self.verdict.value,
        }


def find_profitable_deviation(
    protocol: ProtocolSpec,
    coalition: Iterable[AgentId],
    space: StrategySpace | Sequence[CoalitionStrategy],
    u: UtilityFunction,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> EquilibriumReport:
    """
    The find_profitable_deviation function evaluates every strategy of the space
    exactly and reports the best one. A deviation is profitable only when its
    expected utility is strictly higher than honest play.

    :param protocol: ProtocolSpec: The protocol under test
    :param coalition: Iterable[AgentId]: The deviating agents
    :param space: StrategySpace | Sequence[CoalitionStrategy]: A descriptor or explicit strategies
    :param u: UtilityFunction: The coalition's utility
    :param distribution: Optional[Sequence[Fraction]]: Input prior
    :param cap: Optional[int]: Enumeration cap
    :return: An EquilibriumReport naming the searched space
    """

    coalition = check_coalition(protocol, coalition)
    if isinstance(space, StrategySpace):
        strategies = build_strategy_space(protocol, coalition, space, distribution, cap)
        label = space.describe()
    else:
        strategies = list(space)
        label = f"explicit ({len(strategies)} strategies)"
    honest_eu = expected_utility(protocol, honest(coalition), u, distribution, cap)
    best: Optional[Deviation] = None
    for strategy in strategies:
        eu = expected_utility(protocol, strategy, u, distribution, cap)
        logger.debug("%s: EU %s", strategy.describe(), eu)
        if best is None or eu > best.eu:
            best = Deviation(strategy, eu)
    verdict = Verdict.deviation if best is not None and best.eu > honest_eu else Verdict.equilibrium
    logger.info(
        "%s coalition %s under %s: honest %s, best %s -> %s",
        protocol.name,
        sorted(coalition),
        u.name,
        honest_eu,
        best.eu if best else None,
        verdict.value,
    )
    return EquilibriumReport(
        protocol=protocol.name,
        coalition=coalition,
        utility=u.name,
        space=label,
        strategies_searched=len(strategies),
        honest_eu=honest_eu,
        best_deviation=best,
        verdict=verdict,
    )


def conditional_output_distribution(
    protocol: ProtocolSpec,
    i: AgentId,
    claims: Sequence[int],
    distribution: Optional[Sequence[Fraction]] = None,
    own_input: Optional[int] = None,
    cap: Optional[int] = None,
) -> dict[Any, Fraction]:
    """
    Distribution of agent i's decision when everybody else follows the protocol
    with claimed inputs (listed in agent order, skipping i), optionally
    conditioned on i's own input.
    """

    others = [a for a in protocol.topology.agents if a != i]
    strategy = misreport(others, dict(zip(others, claims)))
    distribution = tuple(distribution) if distribution else None
    mass: dict[Any, Fraction] = defaultdict(Fraction)
    for inputs, decisions, weight in outcome_distribution(protocol, strategy, distribution, cap):
        if own_input is None or inputs[i] == own_input:
            mass[decisions[i]] += weight
    total = sum(mass.values(), Fraction(0))
    return {decision: p / total for decision, p in sorted(mass.items(), key=lambda kv: repr(kv[0]))}


def split_leader_success(
    protocol: ProtocolSpec,
    v: int,
    strategy: CoalitionStrategy,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> Fraction:
    """Probability that both honest agents facing the split view decide v."""

    honest_pair = [a for a in protocol.topology.agents if a not in strategy.coalition]
    distribution = tuple(distribution) if distribution else None
    return sum(
        (
            weight
            for _, decisions, weight in outcome_distribution(protocol, strategy, distribution, cap)
            if all(decisions[a] == v for a in honest_pair)
        ),
        Fraction(0),
    )


def best_split_leader_success(
    protocol: ProtocolSpec,
    v: int,
    i: AgentId,
    j: AgentId,
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> tuple[Fraction, CoalitionStrategy]:
    scored = [
        (split_leader_success(protocol, v, strategy, distribution, cap), strategy)
        for strategy in split_leader_strategies(protocol, i, j)
    ]
    return max(scored, key=lambda pair: pair[0])


def sweep_coalition_sizes(
    protocol: ProtocolSpec,
    sizes: Iterable[int],
    u: UtilityFunction,
    space: StrategySpace = StrategySpace(),
    distribution: Optional[Sequence[Fraction]] = None,
    cap: Optional[int] = None,
) -> list[EquilibriumReport]:
    """One report per coalition of every requested size, in lexicographic order."""

    agents = protocol.topology.agents
    reports = []
    for size in sizes:
        if not 1 <= size < len(agents):
            continue
        for coalition in combinations(agents, size):
            reports.append(find_profitable_deviation(protocol, coalition, space, u, distribution, cap))
    return reports
