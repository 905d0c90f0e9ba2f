"""Pure-Python kernel implementations.

Semantics must match ``_ckernels`` bit for bit: the compiled module is a
drop-in replacement selected at import time, and every seeded decision in the
toolkit flows through these primitives.
"""

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

BACKEND = "python"


def mix64(z: int) -> int:
    """SplitMix64 finalizer over a 64-bit value."""
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def next_u64(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 stream. Returns (new_state, output)."""
    state = (state + _GOLDEN) & _M64
    return state, mix64(state)


def hash_bytes64(data: bytes, seed: int) -> int:
    """Seeded FNV-1a over bytes with a SplitMix64 finalizer."""
    h = (seed ^ _FNV_OFFSET) & _M64
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _M64
    return mix64(h)


def edit_ops(ref: list[int], hyp: list[int]) -> tuple[int, int, int]:
    """Minimal-cost edit decomposition between two id sequences.

    Unit costs. Among minimal-cost alignments the one with the fewest
    substitutions is chosen, which makes the (S, I, D) decomposition
    symmetric under argument swap (S stays, I and D exchange).

    Returns (substitutions, insertions, deletions).
    """
    n = len(ref)
    m = len(hyp)
    if n == 0:
        return 0, m, 0
    if m == 0:
        return 0, 0, n

    # Two-row DP over (distance, substitutions), lexicographic minimum.
    dist_prev = list(range(m + 1))
    subs_prev = [0] * (m + 1)
    dist_cur = [0] * (m + 1)
    subs_cur = [0] * (m + 1)

    for i in range(1, n + 1):
        ri = ref[i - 1]
        dist_cur[0] = i
        subs_cur[0] = 0
        for j in range(1, m + 1):
            cost = 0 if ri == hyp[j - 1] else 1
            best_d = dist_prev[j - 1] + cost
            best_s = subs_prev[j - 1] + cost
            d = dist_prev[j] + 1
            if d < best_d or (d == best_d and subs_prev[j] < best_s):
                best_d = d
                best_s = subs_prev[j]
            d = dist_cur[j - 1] + 1
            if d < best_d or (d == best_d and subs_cur[j - 1] < best_s):
                best_d = d
                best_s = subs_cur[j - 1]
            dist_cur[j] = best_d
            subs_cur[j] = best_s
        dist_prev, dist_cur = dist_cur, dist_prev
        subs_prev, subs_cur = subs_cur, subs_prev

    dist = dist_prev[m]
    subs = subs_prev[m]
    # Any alignment satisfies I - D = m - n and S + I + D = dist.
    ins = (dist - subs + (m - n)) // 2
    dels = (dist - subs - (m - n)) // 2
    return subs, ins, dels
