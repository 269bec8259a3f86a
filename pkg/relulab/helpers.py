import os
import zlib
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Sequence, Tuple, TypeVar

import numpy as np

from . import THREADS_ENV_VAR
from .base import DomainError

logger = logging.getLogger(__name__)

T = TypeVar('T')

#: number of samples generated or reduced per work chunk.
CHUNK_SIZE = 4096


def streamKey(name: str) -> int:
    """Stable integer id for a named random stream (e.g. ``'teacher'``)."""
    return zlib.crc32(name.encode('utf-8'))


def childRng(seed: int, *keys: int | str) -> np.random.Generator:
    """Random generator for the stream identified by ``(seed, *keys)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys and
    drive a counter-based Philox bit generator, so a stream depends only on
    its keys, never on how many other streams were drawn before it.

    Example::
        >>> childRng(7, 'sgd').standard_normal(2)   # same numbers every time
    """
    if seed < 0:
        raise DomainError(f"seed must be unsigned, got {seed}")
    spawnKey = tuple(streamKey(k) if isinstance(k, str) else int(k) for k in keys)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=spawnKey)))


def childSeed(seed: int, *keys: int | str) -> int:
    """An unsigned 63-bit seed derived from ``(seed, *keys)``."""
    return int(childRng(seed, *keys).integers(0, 2**63 - 1))


def workerCount() -> int:
    """Worker threads allowed by ``RELU_LAB_THREADS`` (0 or unset means auto)."""
    raw = os.environ.get(THREADS_ENV_VAR, '0').strip() or '0'
    try:
        n = int(raw)
    except ValueError:
        logger.warning(f"Cannot interpret {THREADS_ENV_VAR}={raw!r}, using auto.")
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def chunkBounds(n: int, chunkSize: int = CHUNK_SIZE) -> List[Tuple[int, int]]:
    """Split ``range(n)`` into consecutive ``(start, stop)`` chunks."""
    return [(start, min(start + chunkSize, n)) for start in range(0, n, chunkSize)]


def mapOrdered(func: Callable[..., T], items: Sequence[Any], parallel: bool = True) -> List[T]:
    """Apply ``func`` to every item, possibly in parallel, keeping input order.

    The result never depends on the number of workers: each item carries
    everything it needs (including its own random stream), and results are
    returned in the order of ``items``.

    :param parallel: if ``False``, run sequentially in the calling thread
        (used for work nested inside an outer parallel map).
    """
    nWorkers = min(workerCount(), len(items)) if parallel else 1
    if nWorkers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=nWorkers) as pool:
        return list(pool.map(func, items))


def chunkedSum(func: Callable[[int, int], Any], n: int, parallel: bool = True) -> Any:
    """Sum ``func(start, stop)`` over the chunks of ``range(n)``, in chunk order.

    ``func`` may return an array or a dict of arrays (summed key by key).
    The summation order is fixed, so the result is bit-identical for any
    number of worker threads.
    """
    if n == 0:
        raise ValueError("nothing to sum over")
    parts = mapOrdered(lambda b: func(*b), chunkBounds(n), parallel)
    total = parts[0]
    for part in parts[1:]:
        if isinstance(total, dict):
            total = {key: total[key] + part[key] for key in total}
        else:
            total = total + part
    return total


def parseVector(value: str) -> np.ndarray:
    """Create a vector from a comma separated string.

    Example::
        >>> parseVector("1, 0, -2.5")
        array([ 1. ,  0. , -2.5])

    :raises: ``ValueError`` if an element cannot be interpreted as a float.
    """
    value = value.strip()
    if value == '':
        raise ValueError("empty vector")
    elts = [v.strip() for v in value.split(',')]
    try:
        return np.array([float(e) for e in elts])
    except ValueError as e:
        raise ValueError(f"Cannot interpret '{value}' as a vector: {e}")
