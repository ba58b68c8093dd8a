from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def chunked(count: int, size: int) -> List[range]:
    """Split range(count) into consecutive ranges of at most ``size`` items."""
    size = max(int(size), 1)
    return [range(start, min(start + size, count)) for start in range(0, count, size)]


def parallel_map(function: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    """Ordered map over a thread pool; results never depend on the worker count."""
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, items))
