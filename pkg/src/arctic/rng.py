"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, stream, *labels)`` through
``numpy.random.SeedSequence``.  Streams are therefore reproducible across
platforms and can be split without any shared state, which is what lets
coupled chains draw identical randomness without running in lockstep.
"""
import zlib

import numpy as np


def _label(v):
    # strings get a stable 32-bit key (Python's hash() is salted per process)
    if isinstance(v, str):
        return zlib.crc32(v.encode()) | (1 << 32)
    return int(v)


class RngStream:
    def __init__(self, seed=0, stream=0, labels=()):
        self.seed = int(seed)
        self.stream = int(stream)
        self.labels = tuple(_label(v) for v in labels)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,) + self.labels)
        self._bitgen = np.random.Philox(ss)
        self.gen = np.random.Generator(self._bitgen)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream}, labels={self.labels})"

    def child(self, *labels):
        """Independent sub-stream; the parent's position is not consumed."""
        return RngStream(self.seed, self.stream, self.labels + tuple(labels))

    def split(self, count):
        return [self.child(i) for i in range(count)]

    def raw(self, size):
        """Raw 64-bit words straight from the Philox counter."""
        return self._bitgen.random_raw(size).astype(np.uint64, copy=False)

    def random(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def randbelow(self, n):
        """Uniform integer in [0, n) for arbitrarily large Python ints."""
        n = int(n)
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        if n == 1:
            return 0
        k = (n - 1).bit_length()
        words = (k + 63) // 64
        mask = (1 << k) - 1
        while True:
            r = 0
            for w in self.raw(words):
                r = (r << 64) | int(w)
            r &= mask
            if r < n:
                return r


def as_stream(rng, default_seed=0):
    if rng is None:
        return RngStream(default_seed)
    if isinstance(rng, RngStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng))
    raise TypeError(f"cannot interpret {rng!r} as an RngStream")


def draws_to_moves(draws, sites):
    """Map raw words to (vertex, coin) pairs.

    The high 32 bits pick a site by multiply-shift (no rejection), the lowest
    bit is the coin.  Coupled copies that share the words share the moves.
    """
    ns = np.uint64(len(sites))
    idx = ((draws >> np.uint64(32)) * ns) >> np.uint64(32)
    vs = np.asarray(sites, dtype=np.int64)[idx.astype(np.int64)]
    coins = (draws & np.uint64(1)).astype(np.uint8)
    return vs, coins
