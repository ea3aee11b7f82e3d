"""Ordered parallel map used for per-unit work."""

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager


@contextmanager
def worker_pool(threads):
    """Yield an executor for ``threads > 1``, otherwise ``None``.

    Callers use ``pool.map`` which preserves input order, so results never
    depend on scheduling.
    """
    if threads is None or threads <= 1:
        yield None
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield pool


def ordered_map(fn, items, pool=None):
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))
