"""Show progress of parallel solver jobs with a tqdm progress bar."""

import concurrent.futures
import logging
import os
import shutil
import sys
from typing import Callable, List, Optional, Sequence, Tuple

import tqdm


class job_tqdm:
    """Convenient context manager to report completion of solver jobs."""

    def __init__(self, total: int, desc: str = "", **kwargs):
        """See tqdm.tqdm for args description, the bar is only shown on an interactive terminal."""
        self.tqdm = None
        self.done = 0
        self.total = total
        self.desc = desc
        if sys.stderr.isatty() and logging.getLogger().isEnabledFor(logging.INFO):
            tqdm_kwargs = {"unit": "job", "leave": False, "mininterval": 0.1, "miniters": 1}
            tqdm_kwargs.update(kwargs)
            self.tqdm = tqdm.tqdm(total=total, desc=self.bar_label(shutil.get_terminal_size((80, 0))[0]), **tqdm_kwargs)

    def bar_label(self, columns: int) -> Optional[str]:
        """Job description fitting a quarter of the terminal width, keeping its end (graph and step ids)."""
        if not self.desc:
            return None
        width = max(columns // 4, 1)
        return self.desc if len(self.desc) <= width else f"…{self.desc[len(self.desc) - width + 1:]}"

    def __bool__(self):
        """Return True if there is an associated progress bar, False instead."""
        return self.tqdm is not None

    def __enter__(self):
        return self

    def __exit__(self, *args):
        if self.tqdm is not None:
            return self.tqdm.close()

    def update(self, n: int = 1) -> None:
        """Report n more finished jobs."""
        self.done += n
        if self.tqdm is not None:
            self.tqdm.update(n)
        else:
            logging.getLogger().debug(f"{self.desc}: {self.done}/{self.total} jobs done")


def thread_count() -> int:
    """Worker thread count, from the GGDA_THREADS environment variable or the CPU count."""
    value = os.getenv("GGDA_THREADS", "")
    try:
        count = int(value)
    except ValueError:
        count = 0
    return count if count > 0 else (os.cpu_count() or 1)


def run_parallel(fn: Callable, jobs: Sequence[Tuple], desc: str = "") -> List:
    """Call fn on every argument tuple of jobs in a thread pool, and return results in job order."""
    if not jobs:
        return []
    with job_tqdm(len(jobs), desc) as progress:
        with concurrent.futures.ThreadPoolExecutor(max_workers=min(thread_count(), len(jobs))) as executor:
            futures = [executor.submit(fn, *job) for job in jobs]
            results = []
            for future in futures:
                results.append(future.result())
                progress.update()
    return results
