"""Deterministic seeding and random streams.

All randomness in the toolkit flows from a single 64-bit master seed through
``derive_seed`` into per-record ``DetRng`` streams. Derivation depends only on
stable identifiers (never on position or worker), so outputs are invariant
under sharding and parallelism.
"""
from seqforge.kernels import hash_bytes64, next_u64

_M64 = (1 << 64) - 1


def derive_seed(master_seed: int, *parts: str | int) -> int:
    """Stable 64-bit seed derived from a master seed and identifier parts."""
    h = master_seed & _M64
    for part in parts:
        if isinstance(part, int):
            data = part.to_bytes(8, "little", signed=False)
        else:
            data = part.encode("utf-8")
        h = hash_bytes64(data, h)
    return h


class DetRng:
    """SplitMix64 stream with a tiny, stable surface."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _M64

    def next_u64(self) -> int:
        self._state, out = next_u64(self._state)
        return out

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n). Fixed-point multiply, no rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        return (self.next_u64() * n) >> 64

    def choice(self, seq):
        return seq[self.below(len(seq))]
