#!/usr/bin/env python3

"""Partitioner unit tests."""

import itertools
import logging
import os
import tempfile
import unittest

import numpy as np

from ggda import partitioner
from ggda.errors import DataError
from ggda.graph_model import AttributedGraph


def graph_of(n, edges):
    """Featureless graph from an edge list."""
    return AttributedGraph.build(np.zeros((n, 1)), np.asarray(edges, dtype=np.int64).reshape(-1, 2))


def erdos_renyi(n, p, rng):
    """G(n, p) random graph."""
    iu, ju = np.triu_indices(n, k=1)
    drawn = rng.random(iu.size) < p
    return graph_of(n, np.column_stack([iu[drawn], ju[drawn]]))


class TestPartitioner(unittest.TestCase):
    """Partitioner test suite."""

    def setUp(self):
        """Set up test case stuff."""
        self.rng = np.random.default_rng(42)

    def test_edge_cut(self):
        """Test edge cut counting."""
        k4 = graph_of(4, list(itertools.combinations(range(4), 2)))
        self.assertEqual(partitioner.edge_cut(k4, partitioner.Partition(np.zeros(4), 1)), 0)
        self.assertEqual(partitioner.edge_cut(k4, partitioner.Partition([0, 0, 1, 1], 2)), 4)
        graph = erdos_renyi(30, 0.2, self.rng)
        assignment = self.rng.integers(3, size=30)
        assignment[:3] = (0, 1, 2)
        brute_force = sum(1 for u, v in graph.edges if assignment[u] != assignment[v])
        self.assertEqual(partitioner.edge_cut(graph, partitioner.Partition(assignment, 3)), brute_force)
        with self.assertRaises(DataError):
            partitioner.edge_cut(graph, partitioner.Partition([0, 1], 2))

    def test_partition_validation(self):
        """Test partition invariants."""
        with self.assertRaises(DataError):
            partitioner.Partition([0, 0, 2], 3)
        with self.assertRaises(DataError):
            partitioner.Partition([0, 3], 3)
        partition = partitioner.Partition([1, 0, 1], 2)
        np.testing.assert_array_equal(partition.part_sizes, [1, 2])
        np.testing.assert_array_equal(partition.members(1), [0, 2])

    def test_partition_small(self):
        """Test partitioning of small graphs with known optimum."""
        triangles = graph_of(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        result = partitioner.partition(triangles, 2, seed=0)
        self.assertEqual(partitioner.edge_cut(triangles, result), 0)
        np.testing.assert_array_equal(result.part_sizes, [3, 3])

        path = graph_of(4, [(0, 1), (1, 2), (2, 3)])
        # exhaustive balanced 2-partition optimum
        lo, hi = partitioner.balance_bounds(4, 2)
        best = min(
            partitioner.edge_cut(path, partitioner.Partition(a, 2))
            for a in itertools.product((0, 1), repeat=4)
            if lo <= sum(a) <= hi and 0 < sum(a) < 4
        )
        self.assertEqual(best, 1)
        self.assertEqual(partitioner.edge_cut(path, partitioner.partition(path, 2, seed=3)), best)

        single = partitioner.partition(path, 1, seed=0)
        self.assertEqual(partitioner.edge_cut(path, single), 0)
        np.testing.assert_array_equal(single.assignment, np.zeros(4))

        with self.assertRaises(DataError):
            partitioner.partition(path, 5, seed=0)
        with self.assertRaises(DataError):
            partitioner.partition(path, 0, seed=0)

    def test_partition_random_baseline(self):
        """Test that partitions beat random balanced partitions."""
        graph = erdos_renyi(200, 0.05, self.rng)
        result = partitioner.partition(graph, 4, seed=0)
        self.assertEqual(result.n_parts, 4)
        self.assertTrue(np.all(result.part_sizes > 0))
        lo, hi = partitioner.balance_bounds(200, 4)
        self.assertTrue(np.all((result.part_sizes >= lo) & (result.part_sizes <= hi)))
        random_cuts = [
            partitioner.edge_cut(graph, partitioner.Partition(self.rng.permutation(np.arange(200) % 4), 4))
            for _ in range(100)
        ]
        self.assertLess(partitioner.edge_cut(graph, result), np.median(random_cuts))

    def test_partition_deterministic(self):
        """Test partition determinism for a given seed."""
        graph = erdos_renyi(150, 0.04, self.rng)
        a = partitioner.partition(graph, 5, seed=7)
        b = partitioner.partition(graph, 5, seed=7)
        np.testing.assert_array_equal(a.assignment, b.assignment)

    def test_partition_isolated(self):
        """Test isolated vertices assignment."""
        graph = graph_of(8, [(0, 1), (1, 2), (2, 3)])
        result = partitioner.partition(graph, 3, seed=0)
        self.assertEqual(result.assignment.size, 8)
        self.assertTrue(np.all(result.part_sizes > 0))
        self.assertLessEqual(result.part_sizes.max() - result.part_sizes.min(), 2)

        edgeless = graph_of(5, [])
        result = partitioner.partition(edgeless, 2, seed=0)
        np.testing.assert_array_equal(np.sort(result.part_sizes), [2, 3])

    def test_refinement_monotonic(self):
        """Test that refinement never increases the cut."""
        graph = erdos_renyi(80, 0.08, self.rng)
        adjacency = graph.adjacency.tocsr()
        lo, hi = partitioner.balance_bounds(80, 4)
        for seed in range(5):
            with self.subTest(seed=seed):
                initial = np.random.default_rng(seed).permutation(np.arange(80) % 4)
                state = partitioner._PartState(adjacency, np.ones(80), initial, 4, lo, hi)
                before = state.cut()
                state.refine()
                self.assertLessEqual(state.cut(), before)
                self.assertEqual(
                    state.cut(), partitioner.edge_cut(graph, partitioner.Partition(state.assignment, 4))
                )

    def test_default_part_count(self):
        """Test default part count."""
        for n, expected in ((1, 1), (10, 2), (1000, 2), (1200, 3), (10**6, 64)):
            with self.subTest(n=n):
                self.assertEqual(partitioner.default_part_count(n), expected)

    def test_save_assignment(self):
        """Test assignment file writing."""
        with tempfile.TemporaryDirectory() as temp_dir:
            filepath = os.path.join(temp_dir, "parts.txt")
            partitioner.save_assignment(partitioner.Partition([1, 0, 1], 2), filepath)
            with open(filepath, "rt") as f:
                self.assertEqual(f.read(), "1\n0\n1\n")


if __name__ == "__main__":
    # disable logging
    logging.basicConfig(level=logging.CRITICAL + 1)

    # run tests
    unittest.main()
