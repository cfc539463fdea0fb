"""Thread-pool setup for the numba kernels.

Must be imported before numba so that the pool can be resized later with
``set_threads``; numba fixes its maximum pool size at first import.
"""
import os

_MAX_THREADS = max(8, os.cpu_count() or 1)
os.environ.setdefault("NUMBA_NUM_THREADS", str(_MAX_THREADS))
# skip the TBB probe first; old TBB builds emit a warning on every run
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

import numba  # noqa: E402


def set_threads(n=None):
    """Set the number of worker threads; ``None`` reads ``IMRC_THREADS``.

    Returns the thread count actually in effect (clamped to the pool size).
    """
    if n is None:
        env = os.environ.get("IMRC_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def get_threads():
    return numba.get_num_threads()
