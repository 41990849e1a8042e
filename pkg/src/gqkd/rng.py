"""Counter-based random streams for reproducible parallel Monte Carlo.

Two layers, both pure functions of their keys:

* per-cycle draws (Alice's bit) come from a SplitMix64-style hash of
  ``(seed, block, cycle, draw)``, vectorised over cycle indices;
* per-block event draws use numpy's Philox4x64-10 keyed by
  ``(seed, block)``, so a block's events never depend on which worker ran
  it or in what order.
"""
from __future__ import annotations

import numpy as np

ALGORITHM = "philox4x64-10[key=(seed,block)] + splitmix64-hash[(seed,block,cycle,draw)]"

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

DRAW_BIT = 0


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash64(seed: int, block, cycle, draw: int) -> np.ndarray:
    """64-bit hash of the key tuple; ``block`` and ``cycle`` may be arrays."""
    with np.errstate(over="ignore"):
        h = _mix(np.full(np.shape(cycle), seed & _MASK64, dtype=np.uint64))
        h = _mix(h ^ np.asarray(block, dtype=np.uint64))
        h = _mix(h ^ np.asarray(cycle, dtype=np.uint64))
        return _mix(h ^ np.uint64(draw & _MASK64))


def keyed_uniform(seed: int, block, cycle, draw: int) -> np.ndarray:
    """Uniform doubles in [0, 1) with 53 random bits."""
    return (hash64(seed, block, cycle, draw) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def alice_bits(seed: int, cycles: np.ndarray, block_size: int) -> np.ndarray:
    cycles = np.asarray(cycles, dtype=np.int64)
    h = hash64(seed, cycles // block_size, cycles, DRAW_BIT)
    return (h >> np.uint64(63)).astype(np.int8)


def block_generator(seed: int, block: int) -> np.random.Generator:
    key = (seed & _MASK64) | ((block & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))
