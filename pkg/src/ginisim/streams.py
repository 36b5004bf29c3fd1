"""Counter-based random streams for reproducible parallel simulation.

Every random number consumed anywhere in the simulator is a pure function
of ``(master_seed, purpose_tag, step_index, block_index)``.  Agents are
grouped into fixed-size blocks and each block gets its own keyed Philox
bit generator, so a population update can be computed block by block, in
any order, on any number of threads, and the result is bit-identical to
the single-threaded run.

The uniform variates produced here are strictly inside (0, 1), which lets
callers push them through inverse CDFs without guarding against log(0).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = (1 << 64) - 1

# Agents i in [k*BLOCK, (k+1)*BLOCK) share the Philox key of block k.
# This constant is part of the reproducibility contract: changing it
# silently changes every trajectory, so don't.
BLOCK = 4096

# Purpose tags keep independent uses of randomness on disjoint keys even
# when they share a step index.
TAG_STEP = 0
TAG_INIT = 1
TAG_PROBE = 2

_TAG_BITS = 56
_STEP_BITS = 24


def _bit_generator(master_seed: int, tag: int, step: int, block: int) -> np.random.Philox:
    if block < 0 or block >= (1 << _STEP_BITS):
        raise ValueError(f"block index {block} outside keyable range")
    if step < 0:
        raise ValueError(f"step index {step} must be nonnegative")
    lane = (tag << _TAG_BITS) | ((step & 0xFFFFFFFF) << _STEP_BITS) | block
    key = np.array([master_seed & _MASK64, lane & _MASK64], dtype=np.uint64)
    return np.random.Philox(key=key)


def uniforms_from_raw(raw: np.ndarray) -> np.ndarray:
    # 52-bit lattice shifted by half a cell: every value (k + 0.5) * 2^-52
    # is exactly representable, so the result lies in [2^-53, 1 - 2^-53]
    # and never touches 0 or 1.  (The 53-bit variant rounds its top cell
    # up to exactly 1.0, which would poison inverse-CDF sampling.)
    return ((raw >> np.uint64(12)) + 0.5) * 2.0**-52


def block_uniforms(master_seed: int, tag: int, step: int, block: int, n: int) -> np.ndarray:
    """Uniform(0,1) draws for one block, independent of all other blocks."""
    bg = _bit_generator(master_seed, tag, step, block)
    return uniforms_from_raw(bg.random_raw(n))


def indexed_uniforms(
    master_seed: int,
    tag: int,
    step: int,
    n: int,
    executor: ThreadPoolExecutor | None = None,
) -> np.ndarray:
    """One uniform per index 0..n-1, assembled from per-block streams.

    The output is a deterministic function of the key material alone;
    ``executor`` only controls how the blocks are computed.
    """
    n_blocks = (n + BLOCK - 1) // BLOCK
    out = np.empty(n, dtype=np.float64)

    def fill(k: int) -> None:
        lo = k * BLOCK
        hi = min(lo + BLOCK, n)
        out[lo:hi] = block_uniforms(master_seed, tag, step, k, hi - lo)

    if executor is None:
        for k in range(n_blocks):
            fill(k)
    else:
        list(executor.map(fill, range(n_blocks)))
    return out


def probe_uniforms(master_seed: int, tag: int, n: int, sequence: int = 0) -> np.ndarray:
    """Single-shot uniforms for diagnostics (pair sampling, calibration).

    ``sequence`` plays the role of the step index so one diagnostic can
    consume several independent batches.
    """
    n_blocks = (n + BLOCK - 1) // BLOCK
    parts = [
        block_uniforms(master_seed, tag, sequence, k, min(BLOCK, n - k * BLOCK))
        for k in range(n_blocks)
    ]
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


class Stream:
    """Consumable handle over the keyed uniforms, for sampling APIs.

    Each call to :meth:`uniforms` burns one sequence index, so repeated
    draws are independent while the whole object stays a deterministic
    function of ``(master_seed, tag, starting sequence)``.
    """

    def __init__(self, master_seed: int, tag: int = TAG_PROBE, sequence: int = 0):
        self.master_seed = master_seed
        self.tag = tag
        self.sequence = sequence

    def uniforms(self, n: int) -> np.ndarray:
        u = probe_uniforms(self.master_seed, self.tag, n, self.sequence)
        self.sequence += 1
        return u
