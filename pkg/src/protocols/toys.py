"""
Small protocols that exist to trip the epistemic verifiers.

All but pooled-mask are deterministic. They compare incoming payloads by value,
so replacing silence with EMPTY never changes what they decide.
"""
from dataclasses import dataclass, replace
from typing import Any

from src.core.models import UNDECIDED, ProtocolSpec, uniform_domain
from src.core.topology import AgentId, Topology
from src.errors import UnsupportedTopology

ONE = "1"


@dataclass(frozen=True)
class ToyState:
    agent: AgentId
    input: int
    topology: Topology
    acc: int = 0
    decision: Any = UNDECIDED


def _init(agent: AgentId, input_: int, topology: Topology) -> ToyState:
    return ToyState(agent=agent, input=input_, topology=topology, acc=input_)


def make_send_iff_one(topology: Topology) -> ProtocolSpec:
    """Round 0 says "1" to every neighbor iff the input is 1; round 1 decides the parity."""

    def step(state: ToyState, round_: int, incoming, selection):
        if round_ == 0:
            sent = {b: ONE for b in state.topology.neighbors(state.agent)} if state.input == 1 else {}
            return state, sent, UNDECIDED
        if state.decision is not UNDECIDED:
            return state, {}, state.decision
        ones = sum(1 for payload in incoming.values() if payload == ONE)
        decision = (state.input + ones) % 2
        return replace(state, decision=decision), {}, decision

    return ProtocolSpec(name="send-iff-one", topology=topology, r=2, rounds_bound=2, init=_init, step=step)


def make_always_silent(topology: Topology) -> ProtocolSpec:
    def step(state: ToyState, round_: int, incoming, selection):
        return state, {}, 0 if round_ >= 1 else UNDECIDED

    return ProtocolSpec(name="always-silent", topology=topology, r=2, rounds_bound=2, init=_init, step=step)


def _cycle(topology: Topology) -> tuple[AgentId, ...]:
    order = topology.cycle_order
    if order is None:
        raise UnsupportedTopology("this toy runs on a single cycle")
    return order


def make_knower_echo(topology: Topology) -> ProtocolSpec:
    """
    Round 0 passes the input to the clockwise neighbor, which by then knows it;
    round 1 that knower answers with its own input, which the receiver could
    not have predicted.
    """

    order = _cycle(topology)
    position = {a: k for k, a in enumerate(order)}
    n = topology.n

    def succ(a):
        return order[(position[a] + 1) % n]

    def pred(a):
        return order[(position[a] - 1) % n]

    def step(state: ToyState, round_: int, incoming, selection):
        a = state.agent
        if round_ == 0:
            return state, {succ(a): state.input}, UNDECIDED
        if round_ == 1:
            heard = incoming.get(pred(a))
            acc = state.acc ^ (heard if heard in (0, 1) else 0)
            return replace(state, acc=acc), {pred(a): state.input}, UNDECIDED
        if state.decision is not UNDECIDED:
            return state, {}, state.decision
        heard = incoming.get(succ(a))
        decision = state.acc ^ (heard if heard in (0, 1) else 0)
        return replace(state, decision=decision), {}, decision

    return ProtocolSpec(name="knower-echo", topology=topology, r=2, rounds_bound=3, init=_init, step=step)


def make_lossy_xor(topology: Topology) -> ProtocolSpec:
    """
    XOR on a triangle routed through agent 2: agents 0 and 1 report a 1 by
    speaking and a 0 by staying silent, and agent 2 answers the same way with
    the parity. The silences leave no trace in the message-effect chain.
    """

    if topology.n != 3 or not topology.is_complete:
        raise UnsupportedTopology("lossy-xor runs on a triangle")
    hub = 2

    def step(state: ToyState, round_: int, incoming, selection):
        a = state.agent
        if state.decision is not UNDECIDED:
            return state, {}, state.decision
        if round_ == 0:
            return state, ({hub: ONE} if a != hub and state.input == 1 else {}), UNDECIDED
        if a == hub and round_ == 1:
            parity = (state.input + sum(1 for p in incoming.values() if p == ONE)) % 2
            sent = {b: ONE for b in (0, 1)} if parity == 1 else {}
            return replace(state, decision=parity), sent, parity
        if a != hub and round_ == 2:
            decision = 1 if incoming.get(hub) == ONE else 0
            return replace(state, decision=decision), {}, decision
        return state, {}, UNDECIDED

    return ProtocolSpec(name="lossy-xor", topology=topology, r=2, rounds_bound=3, init=_init, step=step)


def make_pooled_mask(topology: Topology) -> ProtocolSpec:
    """
    On a triangle agent 0 sends its masked input to agent 1 and the mask to
    agent 2, so neither learns the input alone. Agent 1 answers in round 2 with
    its own input, which is harmless until 1 and 2 compare notes.
    """

    if topology.n != 3 or not topology.is_complete:
        raise UnsupportedTopology("pooled-mask runs on a triangle")

    def step(state: ToyState, round_: int, incoming, selection):
        a = state.agent
        if round_ == 0:
            sent = {1: state.input ^ selection, 2: selection} if a == 0 else {}
            return state, sent, UNDECIDED
        if round_ == 1:
            return state, {}, UNDECIDED
        sent = {0: state.input} if a == 1 else {}
        return replace(state, decision=0), sent, 0

    return ProtocolSpec(
        name="pooled-mask",
        topology=topology,
        r=2,
        rounds_bound=3,
        init=_init,
        step=step,
        randomness=(uniform_domain((0, 1)),),
    )
