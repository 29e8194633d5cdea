"""Counter-based random streams.

Every draw is addressed by (seed, stream, block). The Philox counter is set
from the block index, so any block can be regenerated on its own and the
result never depends on the order in which blocks are consumed.
"""
import numpy as np

BLOCK = 4096


def _generator(seed: int, stream: int, block: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    # counter is 256 bits; the top word carries the block number
    bg.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.array([0, 0, 0, block], dtype=np.uint64), "key": key},
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(bg)


def uniform(seed: int, stream: int, start: int, count: int, dim: int = 2) -> np.ndarray:
    """Uniform [0,1)^dim samples with global indices start .. start+count-1.

    Sample i always comes out the same regardless of how the range is split.
    """
    if count <= 0:
        return np.empty((0, dim))
    out = np.empty((count, dim))
    first, last = start // BLOCK, (start + count - 1) // BLOCK
    pos = 0
    for b in range(first, last + 1):
        u = _generator(seed, stream, b).random((BLOCK, dim))
        lo = max(start, b * BLOCK) - b * BLOCK
        hi = min(start + count, (b + 1) * BLOCK) - b * BLOCK
        out[pos:pos + hi - lo] = u[lo:hi]
        pos += hi - lo
    return out


def permutation(seed: int, stream: int, n: int) -> np.ndarray:
    return _generator(seed, stream, 0).permutation(n)


# stream ids, fixed so different consumers never share draws
STREAM_GREEDY = 1
STREAM_VOLUME = 2
STREAM_BASIN = 3
STREAM_LEMMA = 4
STREAM_PRESSURE = 5
