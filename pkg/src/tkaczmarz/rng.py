"""Seeded, splittable random streams with fully documented transforms.

Every stream is Philox4x64-10 (Salmon et al., Random123) with the 128-bit
key ``(seed + 2**64 * stream_id)``; raw output is the sequence of 64-bit
words produced by numpy's :class:`numpy.random.Philox`, which bumps the
256-bit counter before each block, so the first four words are
``Philox(counter=1, key)``, then ``counter=2`` and so on.
On top of the raw words we use only the transforms below, so the block
sequences and generated systems can be reproduced by any other
implementation of Philox:

* uniform double in [0, 1): ``(w >> 11) * 2**-53``
* integer in [0, n): draw ``w`` until ``w < floor(2**64 / n) * n``, return ``w % n``
* k-subset of [0, m): partial Fisher-Yates with the integer transform
  (swap position ``i`` with ``i + integer(m - i)`` for ``i = 0..k-1``),
  returned sorted
* standard normals: Box-Muller on consecutive uniform pairs ``(u1, u2)``,
  ``r = sqrt(-2 log(1 - u1))``, emitting ``r cos(2 pi u2)`` then ``r sin(2 pi u2)``
* weighted choice: ``searchsorted(cumsum(w), u * sum(w), side="right")``
"""

from __future__ import annotations

import numpy as np

__all__ = ["RandomStream", "OUTER", "INNER", "COLUMN", "GENERATOR", "PARTITION", "MONTE_CARLO"]

# stream ids; independent roles never share a stream
OUTER = 0
INNER = 1
COLUMN = 2
PARTITION = 3
MONTE_CARLO = 4
GENERATOR = 16

_MASK64 = (1 << 64) - 1
_TWO64 = 1 << 64


class RandomStream:
    """One Philox stream; ``position`` counts raw 64-bit words consumed."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = (self.seed & _MASK64) | ((self.stream_id & _MASK64) << 64)
        self._bitgen = np.random.Philox(key=key)
        self.position = 0

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, position={self.position})"

    def raw(self, size: int | None = None):
        if size is None:
            self.position += 1
            return int(self._bitgen.random_raw())
        self.position += int(size)
        return self._bitgen.random_raw(int(size))

    def uniform(self, size: int | None = None):
        if size is None:
            return (self.raw() >> 11) * 2.0**-53
        return (self.raw(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def integer(self, n: int) -> int:
        if n < 1:
            raise ValueError(f"integer range must be positive, got {n}")
        limit = (_TWO64 // n) * n
        while True:
            w = self.raw()
            if w < limit:
                return w % n

    def subset(self, m: int, k: int) -> tuple[int, ...]:
        if not 1 <= k <= m:
            raise ValueError(f"cannot draw a {k}-subset of {m} elements")
        pool = list(range(m))
        for i in range(k):
            j = i + self.integer(m - i)
            pool[i], pool[j] = pool[j], pool[i]
        return tuple(sorted(pool[:k]))

    def permutation(self, m: int) -> list[int]:
        pool = list(range(m))
        for i in range(m - 1):
            j = i + self.integer(m - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool

    def normal(self, shape) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape).astype(int))
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).ravel()
        return z[:count].reshape(shape)

    def choice(self, cumulative: np.ndarray) -> int:
        u = self.uniform()
        return int(np.searchsorted(cumulative, u * cumulative[-1], side="right"))
