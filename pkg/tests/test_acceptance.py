#!/usr/bin/env python3

"""End-to-end scenario tests, run only if GGDA_SLOW_TESTS=1."""

import dataclasses
import logging
import os
import statistics
import time
import unittest

from ggda import generation, harness, synth_data
from ggda.generation import GenerationConfig
from ggda.harness import ExperimentConfig, Variant

SEEDS = range(5)


@unittest.skipUnless(os.getenv("GGDA_SLOW_TESTS") == "1", "slow tests disabled")
class TestCsbmScenario(unittest.TestCase):
    """Reference CSBM scenario test suite."""

    @classmethod
    def setUpClass(cls):
        """Run every variant of the reference scenario on all seeds."""
        cls.accuracies = {variant: [] for variant in Variant}
        for seed in SEEDS:
            scenario = harness.csbm_scenario(seed)
            cfg = ExperimentConfig(seed=seed)
            for variant in (Variant.SOURCE_ONLY, Variant.DIRECT_ST, Variant.GGDA_RANDOM_MATCH, Variant.GGDA):
                cls.accuracies[variant].append(harness.run_ablation(scenario, variant, cfg).accuracy)
        cls.medians = {variant: statistics.median(a) for variant, a in cls.accuracies.items() if a}

    def test_end_to_end(self):
        """Test target accuracy of the full method against direct self-training."""
        self.assertGreaterEqual(self.medians[Variant.GGDA], 0.9)
        self.assertGreaterEqual(self.medians[Variant.GGDA] - self.medians[Variant.DIRECT_ST], 0.3)

    def test_ablation_ordering(self):
        """Test that every removed component costs accuracy."""
        self.assertGreaterEqual(self.medians[Variant.GGDA], self.medians[Variant.GGDA_RANDOM_MATCH])
        self.assertGreaterEqual(self.medians[Variant.GGDA_RANDOM_MATCH], self.medians[Variant.DIRECT_ST])
        self.assertGreaterEqual(self.medians[Variant.DIRECT_ST], self.medians[Variant.SOURCE_ONLY])
        self.assertGreaterEqual(self.medians[Variant.GGDA] - self.medians[Variant.SOURCE_ONLY], 0.1)


@unittest.skipUnless(os.getenv("GGDA_SLOW_TESTS") == "1", "slow tests disabled")
class TestScaling(unittest.TestCase):
    """Stage count and generation cost test suite."""

    def test_stage_count_over_kappa(self):
        """Test that larger selection shares never need more stages."""
        counts = harness.stage_counts_over_kappa(harness.csbm_scenario(0), (0.05, 0.1, 0.2, 0.4), ExperimentConfig())
        stages = [count.n_stages for count in counts]
        self.assertEqual(stages, sorted(stages, reverse=True))

    def test_partitioned_speedup(self):
        """Test that partitioned generation is much faster than unpartitioned generation."""
        base = synth_data.CsbmConfig(nodes_per_class=400, p_intra=0.02, p_inter=0.004)
        source = synth_data.csbm_generate(base)
        target = synth_data.csbm_generate(dataclasses.replace(base, seed=1)).without_labels()
        durations = {}
        for n_parts in (1, 8):
            cfg = GenerationConfig(n_steps=2, src_parts=n_parts, tgt_parts=n_parts, trials=1)
            start = time.perf_counter()
            generation.generate_sequence(source, target, cfg)
            durations[n_parts] = time.perf_counter() - start
        self.assertGreaterEqual(durations[1] / durations[8], 5)


if __name__ == "__main__":
    # disable logging
    logging.basicConfig(level=logging.CRITICAL + 1)

    # run tests
    unittest.main()
