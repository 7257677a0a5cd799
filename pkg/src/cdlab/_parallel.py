"""Deterministic-order parallel map capped by ``CDLAB_MAX_WORKERS``."""

import os
from concurrent.futures import ProcessPoolExecutor

ENV_WORKERS = "CDLAB_MAX_WORKERS"


def max_workers():
    cpu = os.cpu_count() or 1
    raw = os.environ.get(ENV_WORKERS, "").strip()
    if not raw:
        return cpu
    try:
        cap = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from None
    return max(1, min(cap, cpu))


def pmap(func, items, workers=None):
    """``list(map(func, items))``, fanned out over processes when workers > 1.

    Results come back in input order, so output is independent of scheduling.
    """
    items = list(items)
    workers = max_workers() if workers is None else max(1, int(workers))
    workers = min(workers, len(items))
    if workers <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items, chunksize=max(1, len(items) // (4 * workers))))
