"""Counter-based random streams.

Every random number used by a run is addressed by ``(seed, stream, substream,
index)``.  Values are produced by Philox, whose counter can be positioned
directly, so any index can be read without touching the ones before it and
two independently built streams always agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

MASK64 = (1 << 64) - 1
BLOCK = 4096  # doubles per cached block; Philox emits 4 per counter step


class Stream(IntEnum):
    TAPE = 1
    STRATEGY = 2
    POLICY = 3
    MECHANISM = 4


# Substreams of Stream.POLICY.  Tie priorities use TIE_BASE + arm.
EXPLORE_COIN = 0
EXPLORE_ARM = 1
TIE_BASE = 16


def _key(seed: int, stream: int, substream: int) -> np.ndarray:
    return np.array([seed & MASK64, ((int(stream) & 0xFFFF) << 48) | (substream & ((1 << 48) - 1))], dtype=np.uint64)


def uniforms(seed: int, stream: int, substream: int, start: int, count: int) -> np.ndarray:
    """Return draws ``start .. start+count-1`` (0-based) of one substream.

    ``start`` must be a multiple of 4.
    """
    if start % 4:
        raise ValueError("start must be a multiple of 4")
    counter = np.array([start // 4, 0, 0, 0], dtype=np.uint64)
    bitgen = np.random.Philox(key=_key(seed, stream, substream), counter=counter)
    return np.random.Generator(bitgen).random(count)


@dataclass
class CounterStream:
    """Random-access view of one substream, cached in blocks."""

    seed: int
    stream: int
    substream: int
    _blocks: dict[int, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def uniform(self, index: int) -> float:
        b, off = divmod(index, BLOCK)
        block = self._blocks.get(b)
        if block is None:
            block = uniforms(self.seed, self.stream, self.substream, b * BLOCK, BLOCK)
            self._blocks[b] = block
        return float(block[off])

    def array(self, count: int) -> np.ndarray:
        """Draws ``0 .. count-1`` in one shot (identical to repeated ``uniform``)."""
        return uniforms(self.seed, self.stream, self.substream, 0, count)
