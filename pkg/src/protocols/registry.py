from fractions import Fraction
from typing import Callable, Sequence

from src.core.models import ProtocolSpec
from src.core.topology import Topology
from src.errors import ConfigInvalid
from src.protocols.consensus import (
    MultivaluedRule,
    make_algorithm1,
    make_candidate_multivalued,
    make_ris_two_path,
    make_xor_consensus,
)
from src.protocols.toys import (
    make_always_silent,
    make_knower_echo,
    make_lossy_xor,
    make_pooled_mask,
    make_send_iff_one,
)

Builder = Callable[[Topology, int, Sequence[Fraction], bool], ProtocolSpec]

BUILDERS: dict[str, Builder] = {
    "ris": lambda t, r, dist, rnd: make_ris_two_path(t, r, randomized=rnd, distribution=dist),
    "xor-consensus": lambda t, r, dist, rnd: make_xor_consensus(t, dist, randomized=rnd),
    "algorithm1": lambda t, r, dist, rnd: make_algorithm1(t, dist, randomized=rnd),
    "mv-min": lambda t, r, dist, rnd: make_candidate_multivalued(
        t, r, MultivaluedRule.min_input, dist, randomized=rnd
    ),
    "mv-leader": lambda t, r, dist, rnd: make_candidate_multivalued(
        t, r, MultivaluedRule.leader_input, dist, randomized=rnd
    ),
    "send-iff-one": lambda t, r, dist, rnd: make_send_iff_one(t),
    "always-silent": lambda t, r, dist, rnd: make_always_silent(t),
    "knower-echo": lambda t, r, dist, rnd: make_knower_echo(t),
    "lossy-xor": lambda t, r, dist, rnd: make_lossy_xor(t),
    "pooled-mask": lambda t, r, dist, rnd: make_pooled_mask(t),
}


def build_protocol(
    name: str,
    topology: Topology,
    r: int = 2,
    distribution: Sequence[Fraction] = (),
    randomized: bool = True,
) -> ProtocolSpec:
    """
    The build_protocol function looks a protocol up by its registry name.

    :param name: str: One of BUILDERS
    :param topology: Topology: The network to run on
    :param r: int: Number of input values (multi-valued candidates and ris only)
    :param distribution: Sequence[Fraction]: Input prior, empty for uniform
    :param randomized: bool: Draw ring masks at random
    :return: The ProtocolSpec
    """

    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ConfigInvalid(f"unknown protocol {name!r}; choose from {sorted(BUILDERS)}") from None
    try:
        return builder(topology, r, tuple(distribution), randomized)
    except ValueError as err:
        raise ConfigInvalid(str(err)) from err
