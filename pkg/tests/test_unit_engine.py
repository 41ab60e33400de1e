import copy
import json
import unittest
from fractions import Fraction
from functools import reduce
from operator import xor

from src.core.engine import (
    classify_decisions,
    classify_outcome,
    default_randomness,
    enumerate_executions,
    enumeration_size,
    execute,
    project,
    sample_executions,
)
from src.core.export import export_trace_jsonl, jsonable, rational
from src.core.models import BOTTOM, EMPTY, UNDECIDED, ProtocolSpec
from src.core.topology import build_custom, build_topology
from src.errors import (
    EnumerationCapExceeded,
    IllegalSend,
    InvalidInput,
    ProtocolOverrun,
    TopologyNotBiconnected,
    UnknownAgent,
)
from src.protocols.consensus import make_xor_consensus
from src.protocols.toys import make_always_silent, make_send_iff_one


def _idle_init(agent, input_, topology):
    return input_


class TestExecute(unittest.TestCase):
    def test_xor_decides_parity_on_every_run(self):
        for kind in ("ring", "complete"):
            for n in (3, 5):
                protocol = make_xor_consensus(build_topology(kind, n))
                executions = enumerate_executions(protocol)
                self.assertEqual(sum(e.probability for e in executions), 1)
                for execution in executions:
                    parity = reduce(xor, execution.inputs, 0)
                    self.assertEqual(execution.trace.decisions, (parity,) * n)
                    self.assertTrue(classify_outcome(execution.trace).legal)

    def test_ring_timing(self):
        protocol = make_xor_consensus(build_topology("ring", 5))
        trace = execute(protocol, protocol.topology, (1, 0, 0, 1, 1), default_randomness(protocol))
        self.assertEqual(trace.terminated_at, 4)
        self.assertEqual(len(trace.rounds), 5)
        self.assertEqual(trace.decisions, (1,) * 5)

    def test_complete_graph_finishes_in_two_rounds(self):
        protocol = make_xor_consensus(build_topology("complete", 4))
        self.assertTrue(protocol.is_deterministic)
        trace = execute(protocol, protocol.topology, (1, 1, 0, 0), default_randomness(protocol))
        self.assertEqual(trace.terminated_at, 1)

    def test_all_ones_on_even_ring_is_erroneous(self):
        protocol = make_xor_consensus(build_topology("ring", 4))
        trace = execute(protocol, protocol.topology, (1, 1, 1, 1), default_randomness(protocol))
        outcome = classify_outcome(trace)
        self.assertFalse(outcome.legal)
        self.assertEqual(outcome.reason, "validity")
        self.assertEqual(str(outcome), "Erroneous(validity)")

    def test_randomized_ring_enumeration_size(self):
        protocol = make_xor_consensus(build_topology("ring", 3))
        agents = protocol.topology.agents
        self.assertEqual(enumeration_size(protocol, agents, agents), 64)
        self.assertEqual(len(enumerate_executions(protocol)), 64)

    def test_messages_sent_in_round_are_incoming_that_round(self):
        protocol = make_send_iff_one(build_topology("complete", 3))
        trace = execute(protocol, protocol.topology, (1, 0, 0), default_randomness(protocol))
        self.assertEqual(trace.record(1, 0).incoming_from(0), "1")
        self.assertIsNone(trace.record(0, 0).incoming_from(1))
        self.assertEqual(trace.decisions, (1, 1, 1))

    def test_non_biconnected_network(self):
        path = build_custom(3, [(0, 1), (1, 2)])
        protocol = make_always_silent(path)
        with self.assertRaises(TopologyNotBiconnected):
            execute(protocol, path, (0, 0, 0), default_randomness(protocol))

    def test_illegal_send(self):
        ring = build_topology("ring", 4)

        def step(state, round_, incoming, selection):
            return state, {2: "x"}, 0

        protocol = ProtocolSpec("stray", ring, 2, 1, _idle_init, step)
        with self.assertRaises(IllegalSend):
            execute(protocol, ring, (0, 0, 0, 0), default_randomness(protocol))

    def test_overrun(self):
        ring = build_topology("ring", 3)

        def step(state, round_, incoming, selection):
            return state, {}, UNDECIDED

        protocol = ProtocolSpec("stall", ring, 2, 3, _idle_init, step)
        with self.assertRaises(ProtocolOverrun):
            execute(protocol, ring, (0, 0, 0), default_randomness(protocol))

    def test_input_out_of_range(self):
        protocol = make_xor_consensus(build_topology("ring", 3))
        with self.assertRaises(ValueError):
            execute(protocol, protocol.topology, (0, 2, 0), default_randomness(protocol))
        with self.assertRaises(ValueError):
            execute(protocol, protocol.topology, (0, 1), default_randomness(protocol))

    def test_bad_inputs_are_invalid_input(self):
        protocol = make_xor_consensus(build_topology("ring", 3))
        for inputs in ((0, 2, 0), (0, 1), (0, 1, 0, 1)):
            with self.assertRaises(InvalidInput):
                execute(protocol, protocol.topology, inputs, default_randomness(protocol))

    def test_replay_is_deterministic(self):
        protocol = make_xor_consensus(build_topology("ring", 5))
        for execution in enumerate_executions(protocol)[::97]:
            first = execute(protocol, protocol.topology, execution.inputs, execution.randomness)
            second = execute(protocol, protocol.topology, execution.inputs, execution.randomness)
            self.assertEqual(first, second)
            self.assertEqual(first, execution.trace)

    def test_decisions_are_final(self):
        protocol = make_xor_consensus(build_topology("ring", 4))
        for execution in enumerate_executions(protocol):
            trace = execution.trace
            for agent in protocol.topology.agents:
                decided = [trace.record(agent, t).decision for t in range(len(trace.rounds))]
                first = next(t for t, d in enumerate(decided) if d is not UNDECIDED)
                self.assertTrue(all(d == trace.decisions[agent] for d in decided[first:]))
                self.assertTrue(all(d is UNDECIDED for d in decided[:first]))

    def test_messages_arrive_in_one_round(self):
        protocol = make_xor_consensus(build_topology("ring", 4))
        topology = protocol.topology
        for execution in enumerate_executions(protocol):
            trace = execution.trace
            for t in range(len(trace.rounds)):
                for a in topology.agents:
                    for b in topology.neighbors(a):
                        self.assertEqual(trace.record(b, t).incoming_from(a), trace.record(a, t).outgoing_to(b))

    def test_enumeration_cap(self):
        protocol = make_xor_consensus(build_topology("ring", 5))
        with self.assertRaises(EnumerationCapExceeded) as raised:
            enumerate_executions(protocol, cap=100)
        self.assertEqual(raised.exception.size, 1024)

    def test_biased_prior_weights(self):
        protocol = make_xor_consensus(build_topology("complete", 3))
        executions = enumerate_executions(protocol, distribution=(Fraction(1, 4), Fraction(3, 4)))
        by_inputs = {e.inputs: e.probability for e in executions}
        self.assertEqual(by_inputs[(1, 1, 1)], Fraction(27, 64))
        self.assertEqual(by_inputs[(0, 0, 0)], Fraction(1, 64))

    def test_zero_prior_vectors_skipped(self):
        protocol = make_xor_consensus(build_topology("complete", 3))
        executions = enumerate_executions(protocol, distribution=(Fraction(0), Fraction(1)))
        self.assertEqual([e.inputs for e in executions], [(1, 1, 1)])

    def test_sampling_is_seeded(self):
        protocol = make_xor_consensus(build_topology("ring", 3))
        first = sample_executions(protocol, samples=20, seed=7)
        second = sample_executions(protocol, samples=20, seed=7)
        self.assertEqual([e.inputs for e in first], [e.inputs for e in second])
        self.assertEqual(sum(e.probability for e in first), 1)


class TestProjection(unittest.TestCase):
    def setUp(self):
        self.protocol = make_xor_consensus(build_topology("ring", 3))
        self.trace = execute(
            self.protocol, self.protocol.topology, (1, 0, 1), default_randomness(self.protocol)
        )

    def test_project(self):
        run = project(self.trace, 1)
        self.assertEqual(len(run.rounds), 3)
        self.assertEqual(run.rounds[0].input, 0)
        self.assertEqual(run.prefix(-1).rounds, ())
        self.assertEqual(run.prefix(0).rounds, run.rounds[:1])
        self.assertEqual(run.suffix(2).rounds, run.rounds[2:])

    def test_project_unknown_agent(self):
        with self.assertRaises(UnknownAgent):
            project(self.trace, 3)

    def test_messages(self):
        messages = self.trace.messages()
        self.assertEqual(len(messages), 3 * 3 * 2)
        self.assertTrue(all(m.payload is not None for m in messages))


class TestClassify(unittest.TestCase):
    def test_legal(self):
        self.assertTrue(classify_decisions((0, 1, 1), (1, 1, 1)).legal)

    def test_termination(self):
        self.assertEqual(classify_decisions((0, 1), (UNDECIDED, 1)).reason, "termination")
        self.assertEqual(classify_decisions((0, 1), (BOTTOM, BOTTOM)).reason, "termination")

    def test_agreement(self):
        self.assertEqual(classify_decisions((0, 1), (0, 1)).reason, "agreement")

    def test_validity(self):
        self.assertEqual(classify_decisions((1, 1), (0, 0)).reason, "validity")


class TestExport(unittest.TestCase):
    def test_rational(self):
        self.assertEqual(rational(Fraction(9, 16)), "9/16")
        self.assertEqual(rational(Fraction(1)), "1/1")

    def test_jsonable_tokens(self):
        self.assertEqual(jsonable((EMPTY, BOTTOM, None, Fraction(1, 2))), ["EMPTY", "BOTTOM", None, "1/2"])

    def test_tokens_only_equal_themselves(self):
        self.assertNotEqual(EMPTY, "EMPTY")
        self.assertNotEqual(BOTTOM, "BOTTOM")
        self.assertEqual(len({EMPTY: 1, "EMPTY": 2}), 2)
        self.assertIs(copy.deepcopy(EMPTY), EMPTY)
        self.assertIs(copy.copy(BOTTOM), BOTTOM)
        self.assertEqual(jsonable(EMPTY), "EMPTY")
        self.assertEqual(jsonable("EMPTY"), "EMPTY")

    def test_trace_lines(self):
        protocol = make_send_iff_one(build_topology("complete", 3))
        trace = execute(protocol, protocol.topology, (1, 0, 0), default_randomness(protocol))
        lines = export_trace_jsonl(trace)
        self.assertEqual(len(lines), 6)
        first = json.loads(lines[0])
        self.assertEqual(first["agent"], 0)
        self.assertEqual(first["round"], 0)
        self.assertEqual(first["out"], [{"to": 1, "payload": "1"}, {"to": 2, "payload": "1"}])
        self.assertIsNone(first["decision"])


if __name__ == "__main__":
    unittest.main()
