import logging
from concurrent.futures import ProcessPoolExecutor, as_completed

logger = logging.getLogger(__name__)


def ordered_map(func, items, workers: int = 1) -> list:
    """
    Apply func to every item, fanning out to a process pool when workers > 1.

    Results come back in input order regardless of completion order. func must be
    a module-level callable so it can be pickled.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    results = [None] * len(items)
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as executor:
        futures = {executor.submit(func, item): position for position, item in enumerate(items)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    logger.debug("Fanned out %s parameter points over %s workers", len(items), workers)
    return results
