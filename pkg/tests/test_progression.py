#!/usr/bin/env python3

"""Domain progression unit tests."""

import csv
import logging
import math
import os
import tempfile
import unittest

import numpy as np

from ggda import progression, synth_data
from ggda.errors import DataError
from ggda.gnn import TrainConfig
from ggda.graph_model import AttributedGraph, DomainMeasure, disjoint_union
from ggda.progression import ProgressionConfig, Selection
from ggda.synth_data import CsbmConfig, csbm_generate

FAST_TRAIN = TrainConfig(epochs=100, hidden=8, dropout=0.0)


def cluster_graph(rng, n_per_class, shift, labeled):
    """Two class graph with one clique per class."""
    labels = np.repeat([0, 1], n_per_class)
    features = np.where(labels[:, None] == 0, [-2.0, 0.0], [2.0, 0.0]) + shift
    features += 0.1 * rng.normal(size=(labels.size, 2))
    iu, ju = np.triu_indices(labels.size, k=1)
    edges = np.column_stack([iu, ju])[labels[iu] == labels[ju]]
    return AttributedGraph.build(features, edges, labels if labeled else None, 2), labels


class TestProgressionSteps(unittest.TestCase):
    """Selection, decay and domain advancement test suite."""

    def test_config(self):
        """Test progression settings validation."""
        for kwargs in (
            {"eta": -1},
            {"kappa": 0},
            {"beta": -1},
            {"ru_target": 1.0},
            {"cap_k": 0},
            {"max_stages": 0},
        ):
            with self.subTest(**kwargs), self.assertRaises(DataError):
                ProgressionConfig(**kwargs)

    def test_mass_decay(self):
        """Test mass decay factors."""
        self.assertAlmostEqual(progression.mass_decay(1.0, 0.5, 2.0), math.exp(-1))
        self.assertEqual(progression.mass_decay(1.0, 2.0, 2.0), 1.0)
        self.assertEqual(progression.mass_decay(0.0, 0.0, 2.0), 1.0)
        self.assertAlmostEqual(progression.mass_decay(0.0, -1.0, 2.0), math.exp(-2))
        self.assertAlmostEqual(progression.mass_decay(1.0, -1.0, 2.0), math.exp(-2))
        self.assertEqual(progression.mass_decay(-1.0, -0.5, 2.0), 1.0)
        self.assertAlmostEqual(progression.mass_decay(-1.0, -2.0, 2.0), math.exp(-2))
        self.assertEqual(progression.mass_decay(1.0, 0.0, 0.0), 1.0)
        decay = progression.mass_decay(np.array([1.0, 1.0]), np.array([0.75, 1.5]), 4.0)
        np.testing.assert_allclose(decay, [math.exp(-1), 1.0])

    def test_class_caps(self):
        """Test per class selection caps."""
        np.testing.assert_array_equal(progression.class_caps(0.1, np.array([10, 4, 25, 15])), [1, 1, 3, 2])
        np.testing.assert_array_equal(progression.class_caps(1.0, np.array([7, 0])), [7, 1])

    def test_select_vertices(self):
        """Test class capped top score selection."""
        scores = np.array([0.9, 0.8, 0.7, 0.95, 0.1])
        classes = np.array([0, 0, 0, 1, 1])
        ids = np.arange(10, 15)
        picked = progression.select_vertices(scores, classes, 0.1, np.array([20, 10]), ids)
        np.testing.assert_array_equal(picked, [3, 0, 1])

        tied = progression.select_vertices(np.array([0.5, 0.5]), np.zeros(2), 0.1, np.array([10]), np.array([20, 10]))
        np.testing.assert_array_equal(tied, [1])

        self.assertEqual(progression.select_vertices([], [], 0.1, np.array([10]), []).size, 0)

    def test_selection_scores(self):
        """Test distance regularized confidence scores."""
        embeddings = np.array([[0.0], [1.0], [2.0]])
        scores, distances = progression.selection_scores(embeddings, np.ones(2), [0], [1, 2], 1.0)
        np.testing.assert_allclose(distances, [1.0, 2.0])
        np.testing.assert_allclose(scores, [math.exp(-0.5), math.exp(-1)])

        # no distance penalty: margin ordering
        margins = np.array([0.2, 0.7])
        scores, _ = progression.selection_scores(embeddings, margins, [0], [1, 2], 0.0)
        np.testing.assert_allclose(scores, margins)

        scores, _ = progression.selection_scores(embeddings, margins, [0, 1, 2], [1, 2], 1.0)
        np.testing.assert_allclose(scores, margins)

        scores, distances = progression.selection_scores(embeddings, [], [0], [], 1.0)
        self.assertEqual(scores.size, 0)
        self.assertEqual(distances.size, 0)
        with self.assertRaises(DataError):
            progression.selection_scores(embeddings, margins, [], [1, 2], 1.0)

    def test_advance_domain(self):
        """Test domain advancement, decay bookkeeping and truncation."""
        current = DomainMeasure(1, [0, 1, 2], np.full(3, 1 / 3), [0, 1, 0], [1.0, 1.0, 1.0], np.ones(6))
        selected = Selection(np.array([4, 5]), np.array([1, 0]), np.array([0.3, 0.4]), np.zeros(2), np.zeros(2))
        is_target = np.array([False, False, False, False, False, True])
        decay = np.array([1.0, 0.5, 1.0])

        domain = progression.advance_domain(current, selected, decay, 10, is_target)
        self.assertEqual(domain.stage, 2)
        np.testing.assert_array_equal(domain.vertex_ids, [0, 1, 2, 4, 5])
        np.testing.assert_allclose(domain.weights, np.array([1, 0.5, 1, 1, 1]) / 4.5)
        np.testing.assert_array_equal(domain.labels, [0, 1, 0, 1, 0])
        np.testing.assert_allclose(domain.label_scores, [1, 1, 1, 0.3, 0.4])
        np.testing.assert_allclose(domain.decay_mask, [1, 0.5, 1, 1, 1, 1])

        # ties on mass: target first, then new, then lower id
        truncated = progression.advance_domain(current, selected, decay, 3, is_target)
        np.testing.assert_array_equal(truncated.vertex_ids, [0, 4, 5])
        np.testing.assert_allclose(truncated.weights, np.full(3, 1 / 3))

        # target vertices are exempt from decay
        exempt = np.array([False, True, False, False, False, False])
        domain = progression.advance_domain(current, selected, decay, 10, exempt)
        np.testing.assert_allclose(domain.weights, np.full(5, 0.2))
        self.assertEqual(domain.decay_mask[1], 1)

        overlapping = Selection(np.array([2]), np.array([0]), np.array([0.1]), np.zeros(1), np.zeros(1))
        with self.assertRaises(DataError):
            progression.advance_domain(current, overlapping, decay, 10, is_target)

    def test_pool_measures(self):
        """Test labeled target fraction and embedding distances."""
        rng = np.random.default_rng(0)
        source, _ = cluster_graph(rng, 2, 0.0, True)
        target, _ = cluster_graph(rng, 2, 1.0, False)
        pool = disjoint_union([source, target])
        domain = DomainMeasure(1, [0, 4, 6], np.full(3, 1 / 3), [0, 0, 1], np.full(3, np.nan), np.ones(8))
        self.assertEqual(progression.labeled_target_fraction(domain, pool), 0.5)

        embeddings = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
        self.assertAlmostEqual(progression.embedding_distance(embeddings, [0], [1.0], [1], [1.0]), 5.0)
        self.assertAlmostEqual(progression.embedding_distance(embeddings, [0, 2], [0.5, 0.5], [0, 2], [0.5, 0.5]), 0)


class TestAdaptation(unittest.TestCase):
    """Adaptation loop test suite."""

    def setUp(self):
        """Set up test case stuff."""
        rng = np.random.default_rng(1)
        source, self.src_labels = cluster_graph(rng, 6, 0.0, True)
        middle, _ = cluster_graph(rng, 6, 0.25, False)
        target, self.tgt_labels = cluster_graph(rng, 6, 0.5, False)
        self.pool = disjoint_union([source, target])
        self.chain_pool = disjoint_union([source, middle, target])

    def test_run_ggda(self):
        """Test adaptation loop invariants."""
        cfg = ProgressionConfig(kappa=0.5, train=FAST_TRAIN)
        params, predictions, logs = progression.run_ggda(self.pool, self.src_labels, cfg)
        self.assertEqual(params.n_classes, 2)
        self.assertEqual(predictions.shape, (12,))
        self.assertGreaterEqual(np.mean(predictions == self.tgt_labels), 0.9)

        self.assertEqual([log.stage for log in logs], list(range(len(logs))))
        final = logs[-1]
        self.assertEqual(final.selected_ids.size, 0)
        self.assertGreaterEqual(final.labeled_target_fraction, 1 - cfg.ru_target)
        fractions = [log.labeled_target_fraction for log in logs]
        self.assertTrue(all(a <= b for a, b in zip(fractions, fractions[1:])))
        caps = progression.class_caps(cfg.kappa, np.bincount(self.src_labels))
        cap_k = 12
        for log in logs:
            with self.subTest(stage=log.stage):
                self.assertAlmostEqual(log.origin_weights.sum(), 1)
                self.assertLessEqual(log.domain_size, cap_k)
                self.assertTrue(np.all(np.bincount(log.selected_labels, minlength=2) <= caps))
                self.assertTrue(np.all(self.pool.origin[log.selected_ids] > 0))
                self.assertTrue(np.all((log.decay_factors > 0) & (log.decay_factors <= 1)))
                self.assertTrue(np.all(log.decay_mask <= 1))
                self.assertIsNotNone(log.target_distance)
        self.assertIsNone(logs[0].delta_proxy)

        again = progression.run_ggda(self.pool, self.src_labels, cfg)
        np.testing.assert_array_equal(again[1], predictions)

    def test_run_ggda_csbm(self):
        """Test decay masks, pseudo-labels and domain sizes over a CSBM adaptation run."""
        source = csbm_generate(CsbmConfig(nodes_per_class=20))
        shifted = tuple((m[0] + synth_data.DEFAULT_TARGET_SHIFT,) + m[1:] for m in synth_data.DEFAULT_CLASS_MEANS)
        target = csbm_generate(
            CsbmConfig(
                nodes_per_class=20,
                class_means=shifted,
                dissimilar_rewire_frac=synth_data.DEFAULT_TARGET_REWIRE_FRAC,
                seed=1,
            )
        ).without_labels()
        pool = disjoint_union([source, target])
        cfg = ProgressionConfig(kappa=0.25, max_stages=30, train=FAST_TRAIN)
        _, predictions, logs = progression.run_ggda(pool, source.labels, cfg)
        self.assertEqual(predictions.shape, (60,))
        self.assertGreaterEqual(len(logs), 3)
        self.assertTrue(any(log.decayed_ids.size for log in logs))

        masks = {}
        pseudo_labels = {}
        for log in logs:
            with self.subTest(stage=log.stage):
                self.assertLessEqual(log.domain_size, 60)
                self.assertTrue(np.all((log.decay_mask >= 0) & (log.decay_mask <= 1)))
                for vertex, mask in zip(log.decayed_ids.tolist(), log.decay_mask.tolist()):
                    self.assertLessEqual(mask, masks.get(vertex, 1.0))
                    masks[vertex] = mask
                for vertex, label in zip(log.selected_ids.tolist(), log.selected_labels.tolist()):
                    self.assertNotIn(vertex, pseudo_labels)
                    pseudo_labels[vertex] = label
        # selected target vertices are never dropped, so none is selected twice
        self.assertEqual(len(pseudo_labels), round(logs[-1].labeled_target_fraction * 60))
        self.assertTrue(all(pool.origin[vertex] == 1 for vertex in pseudo_labels))

    def test_identity_transfer(self):
        """Test adaptation from a graph to its own unlabeled copy."""
        copy = self.pool.graphs[0].without_labels()
        pool = disjoint_union([self.pool.graphs[0], copy])
        cfg = ProgressionConfig(kappa=1.0, ru_target=0.0, train=FAST_TRAIN)
        _, predictions, logs = progression.run_ggda(pool, self.src_labels, cfg)
        self.assertEqual(logs[-1].stage, 1)
        self.assertEqual(logs[-1].labeled_target_fraction, 1)
        np.testing.assert_array_equal(predictions, self.src_labels)

    def test_run_ggda_errors(self):
        """Test invalid adaptation inputs."""
        cfg = ProgressionConfig(train=FAST_TRAIN)
        with self.assertRaises(DataError):
            progression.run_ggda(self.pool, self.src_labels[:-1], cfg)
        with self.assertRaises(DataError):
            progression.run_ggda(self.pool, self.src_labels + 2, cfg)
        with self.assertRaises(DataError):
            progression.run_ggda(disjoint_union([self.pool.graphs[0]]), self.src_labels, cfg)

    def test_run_isolated(self):
        """Test whole graph gradual self-training."""
        cfg = ProgressionConfig(train=FAST_TRAIN, diagnostics=False)
        _, predictions, logs = progression.run_isolated(self.chain_pool, self.src_labels, cfg)
        self.assertEqual(predictions.shape, (12,))
        self.assertEqual(len(logs), 3)
        np.testing.assert_array_equal(logs[0].selected_ids, self.chain_pool.global_ids(1))
        self.assertEqual(logs[-1].selected_ids.size, 0)
        self.assertEqual(logs[-1].labeled_target_fraction, 1)
        self.assertIsNone(logs[-1].target_distance)

    def test_save_stage_logs(self):
        """Test stage log CSV writing."""
        cfg = ProgressionConfig(kappa=0.5, train=FAST_TRAIN)
        _, _, logs = progression.run_ggda(self.pool, self.src_labels, cfg)
        with tempfile.TemporaryDirectory() as temp_dir:
            filepath = os.path.join(temp_dir, "stages.csv")
            progression.save_stage_logs(logs, self.pool, filepath)
            with open(filepath, "rt", newline="") as f:
                rows = list(csv.reader(f))
        self.assertEqual(tuple(rows[0]), progression.STAGES_HEADER)
        self.assertEqual(rows[1][:2], ["0", "12"])
        self.assertEqual(rows[1][5], "stage")
        self.assertTrue(all(len(row) == len(progression.STAGES_HEADER) for row in rows))
        events = [row[5] for row in rows[1:]]
        self.assertEqual(events.count("stage"), len(logs))
        self.assertEqual(events.count("selected"), sum(log.selected_ids.size for log in logs))
        self.assertEqual(events.count("graph_weight"), self.pool.n_graphs * len(logs))


if __name__ == "__main__":
    # disable logging
    logging.basicConfig(level=logging.CRITICAL + 1)

    # run tests
    unittest.main()
