"""Counter-based random streams.

Every Gaussian draw in the package is a pure function of ``(seed, sample, k)``:
the standard normal for coefficient ``k`` of sample ``i`` is produced by a
Box-Muller transform of two 64-bit words of the Philox4x64 stream keyed by
``seed``, at a fixed position determined by ``i`` and ``k``.  This makes
sampling independent of chunking, thread count and evaluation order.

Auxiliary randomness (random orthogonal matrices, optimizer restarts, mixture
labels) comes from :func:`substream`, which places each ``(tag, index)`` pair
in its own region of the 256-bit Philox counter space.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / float(1 << 53)

DEFAULT_SEED = 0


def check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def default_seed() -> int:
    """Seed used when none is given; the ``GNL_SEED`` environment variable wins."""
    env = os.environ.get("GNL_SEED")
    if env is not None and env.strip():
        return check_seed(int(env))
    return DEFAULT_SEED


def _blocks_per_sample(n: int) -> int:
    # two raw words per normal, four words per Philox block
    return (2 * n + 3) // 4


def normal_block(seed: int, n: int, start: int, count: int) -> np.ndarray:
    """Standard normals for samples ``start .. start+count-1``, shape ``(count, n)``."""
    seed = check_seed(seed)
    if count <= 0:
        return np.empty((0, n))
    m4 = _blocks_per_sample(n)
    # numpy's Philox increments the counter before producing a block, so start
    # one below the first block (all-ones wraps around to block 0)
    first = start * m4
    counter = [first - 1, 0, 0, 0] if first else [_MASK64] * 4
    bitgen = np.random.Philox(key=seed, counter=counter)
    raw = bitgen.random_raw(count * m4 * 4).reshape(count, m4 * 4)[:, : 2 * n]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    u1 = u[:, 0::2]
    u2 = u[:, 1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode()) + 1


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for auxiliary draws, keyed by ``(seed, tag, index)``."""
    seed = check_seed(seed)
    return np.random.Generator(
        np.random.Philox(key=seed, counter=[0, int(index) & _MASK64, _tag_word(tag), 0])
    )


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar orthogonal matrix via QR of a Gaussian matrix with sign correction."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))
