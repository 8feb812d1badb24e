"""Block-parallel evaluation whose results do not depend on the worker count.

Rows are cut into blocks of a fixed size that never depends on the number of
workers.  Each block is evaluated by exactly the same numpy calls whichever
thread picks it up, and block results are combined afterwards in block-index
order.  Changing ``set_threads`` can therefore not change a single bit.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_ROWS = 256
_threads = 1


def set_threads(n):
    global _threads
    if n is None:
        n = os.cpu_count() or 1
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads():
    return _threads


def map_blocks(fn, n_rows, block=BLOCK_ROWS):
    """Return ``[fn(lo, hi) for each fixed block]`` in block order."""
    edges = list(range(0, n_rows, block)) + [n_rows]
    spans = list(zip(edges[:-1], edges[1:]))
    if _threads <= 1 or len(spans) <= 1:
        return [fn(lo, hi) for lo, hi in spans]
    with ThreadPoolExecutor(max_workers=min(_threads, len(spans))) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


def map_rows(fn, n_rows, block=BLOCK_ROWS):
    """Concatenate per-row block results along the leading axis."""
    parts = map_blocks(fn, n_rows, block)
    return np.concatenate(parts, axis=0) if parts else np.empty(0)


def ordered_sum(buffer):
    """Sum over the leading axis as a pure function of the buffer contents.

    Vectors use an exactly rounded sum; higher-rank buffers are accumulated
    row after row in index order.
    """
    if isinstance(buffer, list) and buffer and np.ndim(buffer[0]) > 0:
        acc = np.array(buffer[0], dtype=float, copy=True)
        for part in buffer[1:]:
            acc += part
        return acc
    buffer = np.asarray(buffer, dtype=float)
    if buffer.ndim == 1:
        return math.fsum(buffer.tolist())
    return np.add.reduce(buffer, axis=0)
