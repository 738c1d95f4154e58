"""Seeded random streams and deterministic chunked sampling."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Rows per chunk are chosen from the problem size only, never from the worker
# count, so results do not depend on parallelism.
CHUNK_ELEMENTS = 1 << 22


def as_generator(rng):
    """Coerce ``None``/int/SeedSequence/Generator into a ``Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return np.random.default_rng(rng)


def substream(seed, *key):
    """Independent generator for ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def chunk_sizes(count, width):
    rows = max(1024, CHUNK_ELEMENTS // max(1, int(width)))
    sizes = [rows] * (count // rows)
    if count % rows:
        sizes.append(count % rows)
    return sizes


def chunked_map(fn, count, width, rng, workers=1):
    """Apply ``fn(size, generator)`` to fixed chunks and stack the results.

    Each chunk gets its own child stream spawned from ``rng``; chunk
    boundaries depend on ``count`` and ``width`` only.
    """
    rng = as_generator(rng)
    sizes = chunk_sizes(count, width)
    streams = rng.spawn(len(sizes))
    if workers is None or workers <= 1 or len(sizes) == 1:
        parts = [fn(s, g) for s, g in zip(sizes, streams)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, sizes, streams))
    return np.concatenate(parts, axis=0)
