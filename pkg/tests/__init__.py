#!/usr/bin/env python3

"""ggda command line tests."""

import contextlib
import csv
import io
import logging
import os
import tempfile
import unittest

import numpy as np

import ggda
from ggda import harness
from ggda.graph_model import load_bundle, load_pool


class TestCommandLine(unittest.TestCase):
    """ggda command line test suite."""

    def setUp(self):
        """Set up test case stuff."""
        self.temp_dir = tempfile.TemporaryDirectory()
        self.addCleanup(self.temp_dir.cleanup)
        self.source = self.path("source")
        self.target = self.path("target")
        self.assertEqual(self.run_cli("synth", "csbm", "--nodes-per-class", "10", "--out", self.source), 0)
        self.assertEqual(
            self.run_cli(
                "synth", "csbm", "--nodes-per-class", "10", "--mean-shift", "1", "--seed", "1", "--out", self.target
            ),
            0,
        )

    def path(self, *names):
        """Path in the temp dir."""
        return os.path.join(self.temp_dir.name, *names)

    def run_cli(self, *argv):
        """Run the command line with quiet logging, return the exit code."""
        with contextlib.redirect_stdout(io.StringIO()) as self.stdout:
            return ggda.cl_main(["-v", "warning", *argv])

    def test_synth(self):
        """Test synthetic graph commands."""
        graph = load_bundle(self.source)
        self.assertEqual(graph.n, 30)
        self.assertTrue(graph.is_labeled)
        argv = ("synth", "shift", "--graph", self.source, "--steps", "2", "--out", self.path("s"))
        self.assertEqual(self.run_cli(*argv), 0)
        for step in range(3):
            self.assertEqual(load_bundle(self.path(f"s_{step}")).n, 30)

    def test_partition_fgw_eval(self):
        """Test the partition, fgw and eval commands."""
        assignment_filepath = self.path("parts.txt")
        self.assertEqual(
            self.run_cli("partition", "--graph", self.source, "--parts", "3", "--out", assignment_filepath), 0
        )
        with open(assignment_filepath, "rt") as f:
            assignment = [int(line) for line in f]
        self.assertEqual(len(assignment), 30)
        self.assertEqual(set(assignment), {0, 1, 2})

        coupling_filepath = self.path("coupling.f32")
        self.assertEqual(
            self.run_cli("fgw", "--g1", self.source, "--g2", self.target, "--coupling-out", coupling_filepath), 0
        )
        value, iters = self.stdout.getvalue().split()
        self.assertGreater(float(value), 0)
        self.assertGreaterEqual(int(iters), 1)
        coupling = np.fromfile(coupling_filepath, dtype="<f4").reshape(30, 30)
        self.assertAlmostEqual(float(coupling.sum()), 1, delta=1e-4)

        predictions_filepath = self.path("predictions.txt")
        harness.save_predictions(load_bundle(self.target).labels, predictions_filepath)
        report_filepath = self.path("report.csv")
        self.assertEqual(
            self.run_cli(
                "eval", "--predictions", predictions_filepath, "--graph", self.target, "--out", report_filepath
            ),
            0,
        )
        self.assertEqual(self.stdout.getvalue(), "accuracy=1.0000 micro_f1=1.0000 macro_f1=1.0000\n")
        self.assertTrue(os.path.isfile(report_filepath))

    def test_pipeline(self):
        """Test generation, adaptation and evaluation in one run."""
        out_dir = self.path("out")
        code = self.run_cli(
            "pipeline",
            "--source",
            self.source,
            "--target",
            self.target,
            "--out",
            out_dir,
            "--k",
            "2",
            "--ps",
            "1",
            "--pt",
            "1",
            "--trials",
            "1",
            "--bcd-iters",
            "2",
            "--epochs",
            "10",
            "--hidden",
            "4",
            "--kappa",
            "0.5",
            "--max-stages",
            "5",
        )
        self.assertEqual(code, 0)
        self.assertTrue(self.stdout.getvalue().startswith("accuracy="))
        graphs = load_pool(os.path.join(out_dir, "pool"))
        self.assertEqual(len(graphs), 3)
        self.assertTrue(graphs[0].is_labeled)
        self.assertFalse(graphs[-1].is_labeled)
        for filename in ("predictions.txt", "stages.csv", "params.meta", "params.f32", "decay_heatmap.csv"):
            self.assertTrue(os.path.isfile(os.path.join(out_dir, "run", filename)), filename)
        self.assertEqual(harness.load_predictions(os.path.join(out_dir, "run", "predictions.txt")).size, 30)
        with open(os.path.join(out_dir, harness.RESOLVED_CONFIG_FILENAME), "rt") as f:
            resolved = f.read()
        self.assertIn("kappa = 0.5\n", resolved)
        self.assertIn(f"version = {ggda.__version__}\n", resolved)

    def test_config_file(self):
        """Test that config file values sit between built-in defaults and flags."""
        predictions_filepath = self.path("predictions.txt")
        harness.save_predictions(load_bundle(self.target).labels, predictions_filepath)
        config_filepath = self.path("ggda.conf")
        with open(config_filepath, "wt") as f:
            f.write("# evaluation\nvalidation-fraction = 0.5\n\n")

        def n_validation(*flags):
            report_filepath = self.path("report.csv")
            argv = ["--config", config_filepath, "eval", "--predictions", predictions_filepath, "--graph", self.target]
            self.assertEqual(self.run_cli(*argv, "--out", report_filepath, *flags), 0)
            with open(report_filepath, "rt", newline="") as f:
                return int(dict(csv.reader(f))["n_validation"])

        self.assertEqual(n_validation(), 15)
        self.assertEqual(n_validation("--validation-fraction", "0.2"), 6)

        with open(config_filepath, "at") as f:
            f.write("not a key value line\n")
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(self.run_cli("--config", config_filepath, "eval", "--predictions", "x", "--graph", "y"), 2)

    def test_data_errors(self):
        """Test exit code of invalid inputs."""
        self.assertEqual(self.run_cli("fgw", "--g1", self.source, "--g2", self.path("missing")), 2)
        with open(os.path.join(self.source, "labels.txt"), "at") as f:
            f.write("x\n")
        self.assertEqual(self.run_cli("partition", "--graph", self.source, "--parts", "2", "--out", self.path("p")), 2)
        self.assertEqual(self.run_cli("partition", "--graph", self.target, "--parts", "99", "--out", self.path("p")), 2)

    def test_usage_errors(self):
        """Test exit code of invalid command lines."""
        for argv in (
            (),
            ("partition",),
            ("fgw", "--g1", "a", "--g2", "b", "--q", "3"),
            ("synth",),
            ("ablate", "--source", self.source, "--out", self.path("o")),
        ):
            with self.subTest(argv=argv), contextlib.redirect_stderr(io.StringIO()):
                with self.assertRaises(SystemExit) as cm:
                    self.run_cli(*argv)
                self.assertEqual(cm.exception.code, ggda.EXIT_USAGE)


if __name__ == "__main__":
    # disable logging
    logging.basicConfig(level=logging.CRITICAL + 1)

    # run tests
    unittest.main()
