"""Counter-based deterministic random numbers.

Every random draw in this package comes from a SplitMix64 stream: output k
of a stream with seed s is ``finalize(s + (k + 1) * GOLDEN)`` where
``finalize`` is the SplitMix64 avalanche function. The k-th output is a pure
function of (seed, k), so streams can be replayed, split, and compared
across processes. Normal deviates use the Box-Muller transform over pairs
of stream outputs.
"""

from __future__ import annotations

import numpy as np

__all__ = ["MASK64", "mix64", "CounterRng"]

MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)

# 2**53; uniform doubles take the top 53 bits of a 64-bit output
_DOUBLE_DENOM = float(1 << 53)


def _finalize_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def mix64(*parts: int) -> int:
    """Fold integers into one 64-bit seed.

    Used to derive independent child seeds from (seed, index, ...) tuples;
    the mapping is the documented SplitMix64 finalizer applied to a running
    accumulator, so any implementation can reproduce it.
    """
    acc = 0
    for p in parts:
        acc = _finalize_int((acc + _GOLDEN + (int(p) & MASK64)) & MASK64)
    return acc


def _finalize_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _U_MIX1
    z = (z ^ (z >> np.uint64(27))) * _U_MIX2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """SplitMix64 stream with an explicit counter.

    Methods consume consecutive counter values; two instances with the same
    seed always produce the same sequence regardless of how draws are
    batched.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & MASK64
        self.counter = int(counter)

    def spawn(self, *parts: int) -> "CounterRng":
        """Child stream with a seed derived from this seed and `parts`."""
        return CounterRng(mix64(self.seed, *parts))

    def _raw(self, n: int) -> np.ndarray:
        ks = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        # uint64 arithmetic wraps mod 2**64, matching the scalar definition
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + ks * _U_GOLDEN
            return _finalize_array(state)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n doubles uniform in [low, high)."""
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) / _DOUBLE_DENOM
        return low + (high - low) * u

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n standard-normal deviates via Box-Muller, scaled and shifted."""
        pairs = (n + 1) // 2
        raw = self._raw(2 * pairs)
        # u1 in (0, 1] keeps log() finite; u2 in [0, 1)
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) / _DOUBLE_DENOM
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) / _DOUBLE_DENOM
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return mean + std * out[:n]

    def below(self, bound: int) -> int:
        """One integer uniform in [0, bound). Modulo bias is negligible for
        bound << 2**64 and keeps the draw a single counter step."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return int(self._raw(1)[0] % np.uint64(bound))

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n); consumes exactly n - 1 draws."""
        idx = np.arange(n)
        if n < 2:
            return idx
        raws = self._raw(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(raws[n - 1 - i] % np.uint64(i + 1))
            idx[i], idx[j] = idx[j], idx[i]
        return idx

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """k distinct indices from range(n), in shuffled order."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n} items")
        return self.permutation(n)[:k]
