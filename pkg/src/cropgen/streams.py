"""Counter-based random streams.

Every draw is a pure function of ``(key, counter)``, so splitting work over
threads or pixel ranges cannot change results.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to uint64 input (wrapping)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
        return z ^ (z >> np.uint64(31))


def stream_key(*parts: int) -> np.uint64:
    """Fold integers into one 64-bit key."""
    k = np.uint64(0)
    with np.errstate(over="ignore"):
        for p in parts:
            k = splitmix64(k ^ np.uint64(int(p) & _M64))
    return np.uint64(k)


def uniform_ints(key: np.uint64, counters: np.ndarray, n: int) -> np.ndarray:
    """Integers in ``[0, n)``, one per counter. Modulo bias is below 2**-58 for n < 64."""
    with np.errstate(over="ignore"):
        h = splitmix64(splitmix64(np.asarray(counters, dtype=np.uint64) ^ key))
    return (h % np.uint64(n)).astype(np.int64)


def derive_seed(master: int, index: int) -> int:
    """Child seed for item ``index`` of a run seeded with ``master``."""
    return int(np.random.SeedSequence([master & _M64, index]).generate_state(1, np.uint64)[0])
