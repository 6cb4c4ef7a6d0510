"""Deterministic, platform-independent random number utilities.

All random decisions in the package (row/column subsampling, shuffles,
synthetic noise) are driven by two tiny integer algorithms:

* ``mix64`` -- the SplitMix64 finalizer, a bijective 64-bit scrambler used
  to derive seeds and counter-keyed values.
* xorshift64* -- Marsaglia's 64-bit shift-register generator with a
  multiplicative output scramble (``xorshift_star``).

Keys are produced in counter mode: the k-th value of a stream is a pure
function of ``(seed, stream, k)``.  This makes every consumer order- and
parallelism-independent, and output identical across platforms and numpy
versions (unsigned 64-bit arithmetic only).
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer for a single Python int (mod 2**64)."""
    z = (x + _GOLDEN) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    z = (x + np.uint64(_GOLDEN)) & _MASK64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _xorshift_star_array(x: np.ndarray) -> np.ndarray:
    # One xorshift64* step; states must be nonzero, which mix64 output of
    # distinct counters guarantees except with probability 2**-64.
    x = x | np.uint64(1)
    x = x ^ (x >> np.uint64(12))
    x = x ^ ((x << np.uint64(25)) & _MASK64)
    x = x ^ (x >> np.uint64(27))
    return (x * np.uint64(0x2545F4914F6CDD1D)) & _MASK64


def key_stream(seed: int, stream: int, counters: int | np.ndarray) -> np.ndarray:
    """64-bit keys for ``(seed, stream, counter)`` triples.

    ``counters`` is either a count n (keys for 0..n-1) or an explicit
    uint64 counter array.  Distinct triples give distinct keys because the
    pipeline composes bijections on distinct inputs.
    """
    if isinstance(counters, (int, np.integer)):
        counters = np.arange(int(counters), dtype=np.uint64)
    base = mix64(mix64(seed & 0xFFFFFFFFFFFFFFFF) ^ mix64(stream & 0xFFFFFFFFFFFFFFFF))
    states = _mix64_array(counters.astype(np.uint64) + np.uint64(base))
    return _xorshift_star_array(states)


def uniforms(seed: int, stream: int, counters: int | np.ndarray) -> np.ndarray:
    """Floats in the open interval (0, 1), one per counter."""
    keys = key_stream(seed, stream, counters)
    return ((keys >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)


def normals(seed: int, stream: int, counters: int | np.ndarray) -> np.ndarray:
    """Standard normal deviates, one per counter (Box-Muller)."""
    if isinstance(counters, (int, np.integer)):
        counters = np.arange(int(counters), dtype=np.uint64)
    counters = counters.astype(np.uint64)
    u1 = uniforms(seed, stream, counters * np.uint64(2))
    u2 = uniforms(seed, stream, counters * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def permutation(seed: int, stream: int, n: int) -> np.ndarray:
    """Deterministic uniform permutation of 0..n-1 (argsort of keys)."""
    keys = key_stream(seed, stream, n)
    return np.argsort(keys, kind="stable")


def sample_without_replacement(seed: int, stream: int, n: int, k: int) -> np.ndarray:
    """k distinct indices from 0..n-1, returned in ascending order."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot sample {k} of {n}")
    return np.sort(permutation(seed, stream, n)[:k])
