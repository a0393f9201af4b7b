"""Deterministic splittable random streams.

Every stochastic operation in the package draws from an :class:`RngStream`.
A stream is a value, not a stateful generator: calling :meth:`generator`
twice replays the same draw sequence, and child streams derived with the
same label are identical across runs and platforms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _hash_child(stream_id: int, label) -> int:
    digest = hashlib.blake2b(
        f"{stream_id}:{label!r}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """A replayable random stream identified by (master_seed, stream_id)."""

    master_seed: int
    stream_id: int = 0

    def child(self, label) -> "RngStream":
        """Derive an independent stream. Same label -> same child, always."""
        return RngStream(self.master_seed, _hash_child(self.stream_id, label))

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(
            [self.master_seed & _MASK64, self.stream_id & _MASK64]
        )
        return np.random.Generator(np.random.PCG64(seq))
