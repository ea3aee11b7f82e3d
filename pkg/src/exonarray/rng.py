"""Portable seeded random numbers: SplitMix64 with polar-method normals.

Stream definition (reproducible in any language):

* state starts at ``seed mod 2**64``; each draw adds ``0x9E3779B97F4A7C15``
  to the state and returns the SplitMix64 mix of the new state;
* a uniform is ``(draw >> 11) * 2**-53`` in [0, 1);
* normals use Marsaglia's polar method: take uniforms ``u1, u2``, set
  ``v = 2u - 1``, reject while ``s = v1^2 + v2^2`` is 0 or >= 1, then emit
  ``v1 * f`` followed by ``v2 * f`` with ``f = sqrt(-2 ln s / s)``; the
  second value is kept as a spare for the next normal request;
* an integer below ``n`` is ``floor(u * n)``;
* an exponential with rate ``a`` is ``-log(1 - u) / a``.

The vectorized methods below consume the stream exactly as repeated scalar
calls would.
"""

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def splitmix64_mix(z):
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK
        self._spare = None

    def next_u64(self):
        self.state = (self.state + GOLDEN) & _MASK
        return splitmix64_mix(self.state)

    def _raw_block(self, n):
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        z = z ^ (z >> np.uint64(31))
        return z

    def _advance(self, n):
        self.state = (self.state + n * GOLDEN) & _MASK

    def uniform(self, n=None):
        if n is None:
            return (self.next_u64() >> 11) * 2.0 ** -53
        z = self._raw_block(n)
        self._advance(n)
        return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def below(self, n):
        return int(self.uniform() * n)

    def exponential(self, rate, size):
        return -np.log1p(-self.uniform(size)) / rate

    def normal(self, n=None):
        if n is None:
            return float(self.normal(1)[0])
        out = np.empty(n)
        filled = 0
        if self._spare is not None and n > 0:
            out[0] = self._spare
            self._spare = None
            filled = 1
        while filled < n:
            need_pairs = (n - filled + 1) // 2
            block_pairs = int(need_pairs * 1.35) + 8
            z = self._raw_block(2 * block_pairs)
            u = (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
            v1 = 2.0 * u[0::2] - 1.0
            v2 = 2.0 * u[1::2] - 1.0
            s = v1 * v1 + v2 * v2
            accepted = np.flatnonzero((s < 1.0) & (s > 0.0))
            take = accepted[:need_pairs]
            if take.size:
                f = np.sqrt(-2.0 * np.log(s[take]) / s[take])
                pairs = np.column_stack([v1[take] * f, v2[take] * f]).ravel()
                count = min(pairs.size, n - filled)
                out[filled:filled + count] = pairs[:count]
                filled += count
                if count < pairs.size:
                    self._spare = float(pairs[count])
                used_pairs = int(take[-1]) + 1 if take.size == need_pairs else block_pairs
            else:
                used_pairs = block_pairs
            self._advance(2 * used_pairs)
        return out

    def sample_without_replacement(self, n, k):
        """First ``k`` entries of a partial Fisher-Yates shuffle of range(n)."""
        arr = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k]
