#!/usr/bin/env python3

"""Progress reporting and logging setup unit tests."""

import logging
import os
import unittest
import unittest.mock

from ggda import colored_logging, progress


class TestProgress(unittest.TestCase):
    """Job progress and thread pool test suite."""

    def test_bar_label(self):
        """Test progress bar label truncation."""
        with progress.job_tqdm(3, "interpolate graph 12 step 3") as bar:
            pass
        self.assertEqual(bar.bar_label(200), "interpolate graph 12 step 3")
        self.assertEqual(bar.bar_label(32), "… step 3")
        self.assertEqual(len(bar.bar_label(32)), 8)
        self.assertEqual(bar.bar_label(4), "…")
        self.assertIsNone(progress.job_tqdm(3).bar_label(80))

    def test_thread_count(self):
        """Test worker count from the environment."""
        with unittest.mock.patch.dict(os.environ, {"GGDA_THREADS": "3"}):
            self.assertEqual(progress.thread_count(), 3)
        for value in ("0", "x", ""):
            with self.subTest(value=value), unittest.mock.patch.dict(os.environ, {"GGDA_THREADS": value}):
                self.assertEqual(progress.thread_count(), os.cpu_count() or 1)

    def test_run_parallel(self):
        """Test that results come back in job order."""
        with unittest.mock.patch.dict(os.environ, {"GGDA_THREADS": "4"}):
            squares = progress.run_parallel(pow, [(i, 2) for i in range(10)], "squares")
            self.assertEqual(squares, [i**2 for i in range(10)])
            self.assertEqual(progress.run_parallel(pow, []), [])
            with self.assertRaises(ZeroDivisionError):
                progress.run_parallel(divmod, [(1, 1), (1, 0)])


class TestLogging(unittest.TestCase):
    """Logging setup test suite."""

    def setUp(self):
        """Set up test case stuff."""
        logger = logging.getLogger()
        self.addCleanup(setattr, logger, "handlers", list(logger.handlers))
        self.addCleanup(logger.setLevel, logger.level)

    def record(self, level):
        """Log record at level."""
        return logging.LogRecord("ggda", level, __file__, 1, "stage %d done", (2,), None)

    def test_formatter(self):
        """Test level tags and colors."""
        plain = colored_logging.StageFormatter()
        self.assertEqual(plain.format(self.record(logging.INFO)), "stage 2 done")
        self.assertEqual(plain.format(self.record(logging.WARNING)), "warning: stage 2 done")
        self.assertEqual(plain.format(self.record(logging.ERROR)), "error: stage 2 done")

        color = colored_logging.StageFormatter(color=True)
        self.assertEqual(color.format(self.record(logging.INFO)), "stage 2 done")
        self.assertEqual(color.format(self.record(logging.WARNING)), "\033[33mwarning: stage 2 done\033[0m")
        self.assertEqual(color.format(self.record(logging.CRITICAL)), "\033[1;31mfatal: stage 2 done\033[0m")

    def test_setup_logging(self):
        """Test verbosity levels and handler replacement."""
        logger = logging.getLogger()
        colored_logging.setup_logging("debug")
        self.assertEqual(logger.level, logging.DEBUG)
        colored_logging.setup_logging("warning")
        self.assertEqual(logger.level, logging.WARNING)
        handlers = [h for h in logger.handlers if isinstance(h, colored_logging.TqdmHandler)]
        self.assertEqual(len(handlers), 1)
        self.assertIn("warning: stage 2 done", handlers[0].formatter.format(self.record(logging.WARNING)))
        self.assertEqual(logging.getLogger("torch").level, logging.ERROR)


if __name__ == "__main__":
    # disable logging
    logging.basicConfig(level=logging.CRITICAL + 1)

    # run tests
    unittest.main()
