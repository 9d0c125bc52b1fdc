"""Counter-based random streams.

Every random draw in the package comes from a numpy ``Philox`` generator whose
128-bit key is ``(master, stream)``. The high word of the 256-bit counter
selects a block, so a block (e.g. one time layer of a space-time field) can be
regenerated without replaying the blocks before it. Streams with different
keys are statistically independent, which is what makes replica results
independent of thread count and scheduling order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    """Provenance of a random object: master seed plus stream id."""
    master: int
    stream: int = 0

    def child(self, stream: int) -> "Seed":
        return Seed(self.master, stream)


def task_master(master: int, label: str) -> int:
    """Derive a 64-bit master key for one task (grid point) of an experiment."""
    digest = hashlib.sha256(f"{master & MASK64}|{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def generator(seed: Seed, block: int = 0) -> np.random.Generator:
    """Return the generator for ``(seed.master, seed.stream)`` positioned at ``block``."""
    key = (seed.master & MASK64) | ((seed.stream & MASK64) << 64)
    counter = (block & MASK64) << 192
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
