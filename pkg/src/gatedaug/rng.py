"""Counter-based random number streams.

Every random decision in the package draws from a stream addressed by
``(root_seed, domain, epoch, batch, sample)``.  Streams with equal coordinates
produce identical draw sequences, so augmenting a batch is embarrassingly
parallel yet bit-reproducible, and two runs with the same seed replay the same
randomness regardless of which branches were evaluated in between.

Implemented on numpy's Philox4x64: the 128-bit key carries
``(root_seed, domain)`` and the 256-bit counter starts at
``(0, sample, batch, epoch)``, leaving the low word as the in-stream draw
counter (2**64 draws of separation between neighbouring streams).
"""

from __future__ import annotations

import numpy as np

# Domain words keep unrelated uses of the same root seed statistically
# independent: consuming draws in one domain never shifts another.
DOMAIN_BASIC_DRAW = 1
DOMAIN_HEAVY_DRAW = 2
DOMAIN_APPLY = 3
DOMAIN_MIX_COIN = 4
DOMAIN_SHUFFLE = 5
DOMAIN_INIT = 6
DOMAIN_SPLIT = 7
DOMAIN_DATAGEN = 8

_MASK64 = (1 << 64) - 1


class RngStream:
    """One addressable draw stream.

    The object owns its bit generator; ``reseat`` repositions it to new
    coordinates without paying the (comparatively expensive) Philox
    construction cost, which matters in per-sample hot loops.  A stream must
    not be shared between threads; create one per worker instead.
    """

    __slots__ = ("root_seed", "domain", "epoch", "batch", "sample", "draws", "_bg", "_gen")

    def __init__(self, root_seed: int, domain: int, epoch: int = 0, batch: int = 0, sample: int = 0):
        self.root_seed = root_seed & _MASK64
        self.domain = domain & _MASK64
        self._bg = np.random.Philox(key=np.array([self.root_seed, self.domain], dtype=np.uint64))
        self._gen = np.random.Generator(self._bg)
        self.reseat(epoch, batch, sample)

    def reseat(self, epoch: int, batch: int = 0, sample: int = 0, root_seed: int | None = None) -> "RngStream":
        """Reposition this stream to new coordinates, resetting the draw counter."""
        if root_seed is not None:
            self.root_seed = root_seed & _MASK64
        self.epoch = epoch
        self.batch = batch
        self.sample = sample
        self.draws = 0
        state = self._bg.state
        state["state"]["counter"][:] = (0, sample & _MASK64, batch & _MASK64, epoch & _MASK64)
        state["state"]["key"][:] = (self.root_seed, self.domain)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bg.state = state
        return self

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        self.draws += 1
        return self._gen.uniform(low, high, size)

    def normal(self, scale: float = 1.0, size=None):
        self.draws += 1
        return self._gen.normal(0.0, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in the half-open range [low, high)."""
        self.draws += 1
        return self._gen.integers(low, high, size=size)

    def sign(self) -> float:
        """A fair-coin factor of -1.0 or +1.0."""
        self.draws += 1
        return -1.0 if self._gen.random() < 0.5 else 1.0

    def permutation(self, n: int) -> np.ndarray:
        self.draws += 1
        return self._gen.permutation(n)
