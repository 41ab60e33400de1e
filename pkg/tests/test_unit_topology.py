import json
import unittest

import pytest

from src.core.topology import (
    TopologyKind,
    build_custom,
    build_topology,
    check_two_vertex_connected,
    distances_without,
    load_topology,
    topology_from_document,
)
from src.errors import ConfigInvalid, DuplicateEdge, MalformedEdge, SizeTooSmall, UnknownAgent


class TestTopology(unittest.TestCase):
    def test_ring_edges(self):
        ring = build_topology("ring", 4)
        self.assertEqual(ring.kind, TopologyKind.ring)
        self.assertEqual(ring.edges, frozenset({(0, 1), (1, 2), (2, 3), (0, 3)}))
        self.assertEqual(ring.neighbors(0), (1, 3))
        self.assertEqual(ring.cycle_order, (0, 1, 2, 3))

    def test_complete_edges(self):
        complete = build_topology(TopologyKind.complete, 4)
        self.assertEqual(len(complete.edges), 6)
        self.assertTrue(complete.is_complete)
        self.assertIsNone(complete.cycle_order)

    def test_triangle_is_ring_and_complete(self):
        self.assertEqual(build_topology("ring", 3).edges, build_topology("complete", 3).edges)

    def test_too_small(self):
        with self.assertRaises(SizeTooSmall):
            build_topology("ring", 2)
        with self.assertRaises(SizeTooSmall):
            build_topology("complete", 1)

    def test_custom_kind_needs_edges(self):
        with self.assertRaises(ConfigInvalid):
            build_topology("custom", 4)

    def test_custom_rejects_bad_edges(self):
        with self.assertRaises(MalformedEdge):
            build_custom(3, [(0, 0)])
        with self.assertRaises(MalformedEdge):
            build_custom(3, [(0, 3)])
        with self.assertRaises(MalformedEdge):
            build_custom(3, [(0, 1, 2)])
        with self.assertRaises(DuplicateEdge):
            build_custom(3, [(0, 1), (1, 0)])

    def test_diamond_cycle_order(self):
        diamond = build_custom(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
        self.assertEqual(diamond.cycle_order, (0, 1, 3, 2))
        self.assertFalse(diamond.has_edge(0, 3))

    def test_two_vertex_connectivity(self):
        self.assertTrue(check_two_vertex_connected(build_topology("ring", 5)))
        self.assertTrue(check_two_vertex_connected(build_topology("complete", 4)))
        path = build_custom(3, [(0, 1), (1, 2)])
        self.assertFalse(check_two_vertex_connected(path))
        self.assertFalse(check_two_vertex_connected(build_topology("complete", 2)))

    def test_distances_without(self):
        distances = distances_without(build_topology("ring", 5), 0)
        self.assertEqual(distances[1][4], 3)
        self.assertNotIn(0, distances)

    def test_unknown_agent(self):
        with self.assertRaises(UnknownAgent):
            build_topology("ring", 3).neighbors(7)

    def test_document_round_trip(self):
        diamond = build_custom(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
        self.assertEqual(topology_from_document(diamond.to_document()).edges, diamond.edges)
        with self.assertRaises(MalformedEdge):
            topology_from_document({"edges": []})


def test_load_topology(tmp_path):
    path = tmp_path / "diamond.json"
    path.write_text(json.dumps({"n": 4, "edges": [[0, 1], [0, 2], [1, 3], [2, 3]]}))
    topology = load_topology(path)
    assert topology.n == 4
    assert topology.kind is TopologyKind.custom
    assert check_two_vertex_connected(topology)


def test_load_topology_unreadable(tmp_path):
    with pytest.raises(MalformedEdge):
        load_topology(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("[not json")
    with pytest.raises(MalformedEdge):
        load_topology(broken)


if __name__ == "__main__":
    unittest.main()
