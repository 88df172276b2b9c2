"""Counter-based keyed pseudo-random numbers.

Every value is a pure function of ``(key, stream, counter)``, so a sketch can
regenerate the random projection entry for item ``i`` at any time without
storing it. The mixer is the SplitMix64 finalizer; it is fast and has good
statistical quality but is not a cryptographic generator.
"""

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

CLAMP = 1e-12


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x):
    if isinstance(x, (int, np.integer)):
        return np.asarray(int(x) & _MASK64, dtype=np.uint64)
    return np.asarray(x).astype(np.uint64)


def keyed_words(key, stream, counter):
    """Return 64-bit words for broadcastable arrays of (stream, counter)."""
    with np.errstate(over="ignore"):
        k = _mix(_u64(key) + _GOLDEN)
        s = _mix(k ^ _mix((_u64(stream) + np.uint64(1)) * _GOLDEN))
        return _mix(s + (_u64(counter) + np.uint64(1)) * _GOLDEN)


def keyed_uniform(key, stream, counter):
    """Uniform doubles in [0, 1) on a 2**-53 grid."""
    w = keyed_words(key, stream, counter)
    return (w >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def clamp_open(u, eps=CLAMP):
    """Clamp into [eps, 1 - eps] so logs and 1/cos stay finite."""
    return np.clip(u, eps, 1.0 - eps)


def derive_seed(seed, name):
    """Derive an independent named sub-seed (matrix, noise, stream, hash...)."""
    tag = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return int(keyed_words(seed, tag, 0))
