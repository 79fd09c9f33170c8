"""Output directories built under a temporary name, and moved into place only when complete."""

import contextlib
import os
import shutil
import tempfile


@contextlib.contextmanager
def staging_dir(final_dir: str):
    """
    Safely build an output directory.

    Context manager yielding a temporary directory next to final_dir. On success the temporary directory replaces
    final_dir (removing any previous content), on error it is deleted and final_dir is left untouched.
    """
    final_dir = os.path.abspath(final_dir)
    parent_dir = os.path.dirname(final_dir)
    os.makedirs(parent_dir, exist_ok=True)
    tmp_dir = tempfile.mkdtemp(prefix=".ggda_", dir=parent_dir)
    try:
        yield tmp_dir
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    if os.path.isdir(final_dir):
        shutil.rmtree(final_dir)
    os.replace(tmp_dir, final_dir)
