import unittest
from fractions import Fraction

from src.core.engine import default_randomness, enumerate_executions, execute, project, same_transcript
from src.core.models import EMPTY, MessageRecord
from src.core.topology import build_custom, build_topology
from src.errors import DecodingMismatch, MessageNotInTrace, NondeterministicProtocol, NotAXorProtocol
from src.protocols.consensus import make_ris_two_path, make_xor_consensus
from src.protocols.toys import (
    make_always_silent,
    make_knower_echo,
    make_lossy_xor,
    make_pooled_mask,
    make_send_iff_one,
)
from src.services.epistemics import (
    Sharing,
    aff_of,
    aff_set,
    affected_set,
    decode_inputs,
    detect_informative_silences,
    knowers,
    posterior,
    recv_set,
    rewrite_with_empty,
    ris_transform,
    silence_document,
    strip_buffers,
    verify_input_encoding,
    verify_ris_resilience,
)


def diamond():
    return build_custom(4, [(0, 1), (0, 2), (1, 3), (2, 3)])


class TestAff(unittest.TestCase):
    def setUp(self):
        self.protocol = make_ris_two_path(diamond())
        self.trace = execute(self.protocol, self.protocol.topology, (1, 0, 1, 1), default_randomness(self.protocol))

    def test_recv_set(self):
        self.assertEqual(recv_set(self.trace, [0], 0), frozenset({1, 2}))
        self.assertEqual(recv_set(self.trace, [0], 99), frozenset())

    def test_message_reaches_far_corner(self):
        message = MessageRecord(self.trace.record(0, 0).outgoing_to(1), 0, 0, 1)
        self.assertEqual(affected_set(self.trace, message, 0), frozenset({1}))
        self.assertIn(3, affected_set(self.trace, message, 1))
        self.assertEqual(aff_set(self.trace, message).at(3), frozenset({0, 1, 2, 3}))
        self.assertIn(message, aff_of(self.trace, 3))

    def test_unknown_message(self):
        with self.assertRaises(MessageNotInTrace):
            aff_set(self.trace, MessageRecord("forged", 0, 0, 1))

    def test_affected_sets_only_grow(self):
        for message in self.trace.messages():
            rounds = aff_set(self.trace, message).per_round
            for earlier, later in zip(rounds, rounds[1:]):
                self.assertLessEqual(earlier, later)

    def test_silence_does_not_propagate(self):
        protocol = make_always_silent(build_topology("ring", 3))
        trace = execute(protocol, protocol.topology, (0, 1, 0), default_randomness(protocol))
        self.assertEqual(aff_of(trace, 0), frozenset())


class TestKnowledge(unittest.TestCase):
    def setUp(self):
        self.topology = diamond()
        self.protocol = make_ris_two_path(self.topology)
        self.trace = enumerate_executions(self.protocol)[5].trace

    def test_nobody_knows_at_the_start(self):
        for target in self.topology.agents:
            self.assertEqual(knowers(self.protocol, self.topology, self.trace, target, 0), frozenset())

    def test_knower_timeline_with_coalition_sharing(self):
        self.assertEqual(knowers(self.protocol, self.topology, self.trace, 0, 2, "coalition"), frozenset({3}))
        self.assertEqual(
            knowers(self.protocol, self.topology, self.trace, 0, 3, Sharing.coalition), frozenset({1, 2, 3})
        )

    def test_individual_timeline(self):
        self.assertEqual(knowers(self.protocol, self.topology, self.trace, 0, 1), frozenset())
        self.assertEqual(knowers(self.protocol, self.topology, self.trace, 0, 2), frozenset({3}))
        self.assertEqual(knowers(self.protocol, self.topology, self.trace, 0, 3), frozenset({1, 2, 3}))

    def test_knowers_only_grow(self):
        for topology in (build_topology("ring", 3), self.topology):
            protocol = make_ris_two_path(topology)
            for execution in enumerate_executions(protocol)[::3]:
                horizon = len(execution.trace.rounds)
                for target in topology.agents:
                    for sharing in Sharing:
                        timeline = [
                            knowers(protocol, topology, execution.trace, target, t, sharing)
                            for t in range(horizon + 1)
                        ]
                        for earlier, later in zip(timeline, timeline[1:]):
                            self.assertLessEqual(earlier, later)

    def test_posterior(self):
        run = project(self.trace, 3)
        start = posterior(self.protocol, self.topology, run.prefix(-1), 0)
        self.assertEqual(start.probability(0), Fraction(1, 2))
        self.assertEqual(start.round, 0)
        late = posterior(self.protocol, self.topology, run.prefix(1), 0)
        self.assertEqual(late.probability(self.trace.inputs[0]), 1)

    def test_terminal_point_mass(self):
        for execution in enumerate_executions(self.protocol)[:8]:
            run = project(execution.trace, 1)
            for target in (0, 2, 3):
                final = posterior(self.protocol, self.topology, run, target)
                self.assertEqual(final.probability(execution.inputs[target]), 1)


class TestResilience(unittest.TestCase):
    def test_ris_protocols_pass(self):
        for kind, n in (("ring", 3), ("ring", 5), ("complete", 4)):
            report = verify_ris_resilience(make_ris_two_path(build_topology(kind, n)))
            self.assertTrue(report.passed, report.violations[:1])
            self.assertTrue(report.initial_knowledge_empty)
            self.assertTrue(report.input_sharing)
            self.assertEqual(report.to_document()["result"], "PASS")

    def test_echo_from_a_knower_fails(self):
        protocol = make_knower_echo(build_topology("ring", 3))
        report = verify_ris_resilience(protocol, sharing="none")
        self.assertFalse(report.passed)
        first = report.violations[0]
        self.assertEqual((first.receiver, first.sender, first.round), (0, 1, 1))
        self.assertEqual(report.to_document()["result"], "FAIL")
        pooled = verify_ris_resilience(protocol)
        self.assertFalse(pooled.passed)
        self.assertIn((0, 1, 1), [(v.receiver, v.sender, v.round) for v in pooled.violations])

    def test_pooled_observations_expose_the_mask(self):
        protocol = make_pooled_mask(build_topology("complete", 3))
        alone = verify_ris_resilience(protocol, sharing=Sharing.none)
        self.assertTrue(alone.passed)
        self.assertEqual(alone.to_document()["sharing"], "none")
        pooled = verify_ris_resilience(protocol)
        self.assertFalse(pooled.passed)
        self.assertIs(pooled.sharing, Sharing.coalition)
        self.assertEqual({(v.receiver, v.sender, v.round) for v in pooled.violations}, {(0, 1, 2)})
        self.assertTrue(pooled.initial_knowledge_empty)
        self.assertEqual(pooled.to_document()["sharing"], "coalition")


class TestEncoding(unittest.TestCase):
    def test_xor_consensus_passes(self):
        for kind, n in (("ring", 3), ("ring", 5), ("complete", 3)):
            report = verify_input_encoding(make_xor_consensus(build_topology(kind, n)))
            self.assertTrue(report.passed)

    def test_lossy_variant_fails_with_witness(self):
        report = verify_input_encoding(make_lossy_xor(build_topology("complete", 3)))
        self.assertFalse(report.passed)
        self.assertEqual(report.witness.agent, 0)
        self.assertEqual(report.witness.inputs_a, (0, 0, 0))
        self.assertEqual(report.witness.inputs_b, (0, 1, 1))
        self.assertEqual(report.witness.trace_a.inputs, (0, 0, 0))
        self.assertEqual(report.to_document()["witness"]["decision"], 0)

    def test_rejects_other_decision_rules(self):
        with self.assertRaises(NotAXorProtocol):
            verify_input_encoding(make_ris_two_path(build_topology("ring", 3)))


class TestTransform(unittest.TestCase):
    def setUp(self):
        self.protocol = make_xor_consensus(build_topology("ring", 3), randomized=False)
        self.transformed = ris_transform(self.protocol)

    def test_stripped_traces_match(self):
        self.assertEqual(self.transformed.name, "xor-consensus+piggyback")
        original = enumerate_executions(self.protocol)
        wrapped = enumerate_executions(self.transformed)
        for a, b in zip(wrapped, original):
            self.assertTrue(same_transcript(strip_buffers(a.trace), b.trace))

    def test_ring5_stripped_traces_match(self):
        protocol = make_xor_consensus(build_topology("ring", 5), randomized=False)
        original = enumerate_executions(protocol)
        wrapped = enumerate_executions(ris_transform(protocol))
        self.assertEqual(len(wrapped), 32)
        for a, b in zip(wrapped, original):
            self.assertEqual(a.inputs, b.inputs)
            self.assertTrue(same_transcript(strip_buffers(a.trace), b.trace))
            self.assertEqual(a.trace.decisions, b.trace.decisions)

    def test_buffers_cover_affecting_messages(self):
        for execution in enumerate_executions(self.transformed):
            trace = execution.trace
            stripped = strip_buffers(trace)
            messages = stripped.messages()
            reach = {m: aff_set(stripped, m) for m in messages}
            for t, by_agent in enumerate(trace.rounds):
                for agent, record in by_agent.items():
                    expected = {m for m in messages if m.round < t and agent in reach[m].at(t - 1)}
                    for _, payload in record.outgoing:
                        if payload is not None:
                            self.assertLessEqual(expected, payload.buffer)
            for agent in self.protocol.topology.agents:
                self.assertLessEqual(aff_of(stripped, agent), trace.final_states[agent].buffer)

    def test_every_agent_decodes_every_input(self):
        for n in (3, 5):
            protocol = make_xor_consensus(build_topology("ring", n), randomized=False)
            for execution in enumerate_executions(ris_transform(protocol)):
                trace = execution.trace
                for agent in protocol.topology.agents:
                    decoded = decode_inputs(
                        trace.inputs[agent],
                        trace.decisions[agent],
                        trace.final_states[agent].buffer,
                        protocol,
                        protocol.topology,
                        agent,
                    )
                    self.assertEqual(decoded, execution.inputs)

    def test_buffer_holds_final_round(self):
        trace = execute(self.transformed, self.protocol.topology, (1, 0, 1), default_randomness(self.transformed))
        buffer = trace.final_states[0].buffer
        self.assertIn(2, {record.round for record in buffer})

    def test_mismatched_buffer(self):
        with self.assertRaises(DecodingMismatch):
            decode_inputs(1, 0, frozenset(), self.protocol, self.protocol.topology, 0)

    def test_randomized_protocols_are_rejected(self):
        with self.assertRaises(NondeterministicProtocol):
            ris_transform(make_xor_consensus(build_topology("ring", 3)))


class TestSilences(unittest.TestCase):
    def setUp(self):
        self.protocol = make_send_iff_one(build_topology("complete", 3))

    def test_send_iff_one_is_flagged(self):
        flags = detect_informative_silences(self.protocol)
        self.assertTrue(flags)
        self.assertTrue(all(flag.round == 0 for flag in flags))
        self.assertEqual(flags[0].other_payload, "1")
        self.assertEqual(flags[0].silent_trace.inputs, flags[0].silent_inputs)
        self.assertEqual(flags[0].other_trace.inputs, flags[0].other_inputs)
        self.assertIsNone(flags[0].silent_trace.record(flags[0].receiver, 0).incoming_from(flags[0].sender))
        self.assertEqual(silence_document(self.protocol, flags)["result"], "FAIL")

    def test_rewrite_removes_flags_and_keeps_decisions(self):
        rewritten = rewrite_with_empty(self.protocol)
        self.assertEqual(detect_informative_silences(rewritten), [])
        before = enumerate_executions(self.protocol)
        after = enumerate_executions(rewritten)
        for a, b in zip(before, after):
            self.assertEqual(a.trace.decisions, b.trace.decisions)
        self.assertEqual(after[0].trace.record(0, 0).outgoing_to(1), EMPTY)

    def test_rewrite_is_idempotent(self):
        rewritten = rewrite_with_empty(self.protocol)
        self.assertIs(rewrite_with_empty(rewritten), rewritten)

    def test_sharing_protocols_never_fall_silent(self):
        self.assertEqual(detect_informative_silences(make_xor_consensus(build_topology("ring", 3))), [])

    def test_always_silent_has_nothing_to_flag(self):
        self.assertEqual(detect_informative_silences(make_always_silent(build_topology("ring", 3))), [])


if __name__ == "__main__":
    unittest.main()
