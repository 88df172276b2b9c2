"""Full-space pan-private cropped sum T_1(tau) via randomized response.

Each item owns a counter modulo tau, started uniformly at random, and one bit
started as a fair coin. Every time the counter wraps to zero the bit is
redrawn with bias 1/2 + eps/4 towards one. An item with |a_i| >= tau has
certainly wrapped; an item with a_i < tau wrapped with probability a_i / tau.
The count of ones therefore has mean h/2 + eps T_1(tau) / (4 tau).

Counter and bit arrays are the whole state. The generator that supplies
future coins is deliberately not part of a snapshot: an intruder who learned
it could predict later redraws.
"""

import math

import numpy as np

from .errors import InputError, ModeViolation, SnapshotError
from .snapshot import IntrusionSnapshot, pack_array, unpack_array
from .stream import clean, stream_arrays

SNAPSHOT_KIND = "cropped-sum"


def biased_prob(priv_eps):
    """P(bit = 1) under the wrap distribution."""
    return 0.5 + priv_eps / 4.0


class CroppedSumState:

    def __init__(self, h, tau, priv_eps, seed=None, *, _blank=False):
        if h < 1:
            raise InputError("universe size must be positive")
        if tau < 1 or int(tau) != tau:
            raise InputError("tau must be a positive integer")
        if not 0 < priv_eps <= 1:
            raise InputError("priv_eps must lie in (0, 1]")
        self.h = int(h)
        self.tau = int(tau)
        self.priv_eps = float(priv_eps)
        self.rng = np.random.default_rng(seed)
        if _blank:
            return
        self.counters = self.rng.integers(0, self.tau, size=self.h, dtype=np.int64)
        self.bits = self.rng.random(self.h) < 0.5

    @property
    def privacy_spend(self):
        return self.priv_eps

    def update(self, item, delta=1):
        """Arrival of ``delta`` units of ``item``; one redraw per wrap."""
        item, delta = int(item), int(delta)
        if delta < 0:
            raise ModeViolation("cropped sum accepts cash-register updates only")
        if not 0 <= item < self.h:
            raise InputError(f"item {item} outside universe [0, {self.h})")
        if delta == 0:
            return self
        total = int(self.counters[item]) + delta
        wraps = total // self.tau
        self.counters[item] = total % self.tau
        if wraps:
            # only the last redraw survives, but each wrap consumes a coin
            u = self.rng.random(wraps)
            self.bits[item] = u[-1] < biased_prob(self.priv_eps)
        return self

    def ingest(self, stream):
        """Batch form of repeated ``update``.

        Per-item deltas are summed first and each wrapping item gets a single
        redraw. The resulting state has the same distribution as sequential
        processing, but consumes a different number of coins.
        """
        items, deltas = stream_arrays(clean(stream))
        if (deltas < 0).any():
            raise ModeViolation("cropped sum accepts cash-register updates only")
        if len(items) and (items.min() < 0 or items.max() >= self.h):
            raise InputError("item outside the universe")
        return self.ingest_counts(np.bincount(items, weights=deltas, minlength=self.h))

    def ingest_counts(self, counts):
        """Add a dense per-item count vector (nonnegative integers)."""
        counts = np.asarray(counts)
        if counts.shape != (self.h,):
            raise InputError("count vector has the wrong length")
        if (counts < 0).any():
            raise ModeViolation("cropped sum accepts cash-register updates only")
        total = self.counters + counts.astype(np.int64)
        wrapped = np.flatnonzero(total >= self.tau)
        self.counters = total % self.tau
        if len(wrapped):
            self.bits[wrapped] = self.rng.random(len(wrapped)) < biased_prob(self.priv_eps)
        return self

    def ones(self) -> int:
        return int(np.count_nonzero(self.bits))

    def estimate(self) -> float:
        """(o - h/2) * 4 tau / eps."""
        return (self.ones() - self.h / 2.0) * 4.0 * self.tau / self.priv_eps

    def error_bound(self, alpha) -> float:
        """Deviation 4 alpha tau sqrt(h) / eps, exceeded w.p. at most 2 e^(-2 alpha)."""
        return 4.0 * alpha * self.tau * math.sqrt(self.h) / self.priv_eps

    def snapshot(self) -> IntrusionSnapshot:
        header = {"h": self.h, "tau": self.tau, "priv_eps": self.priv_eps}
        payload = pack_array(self.counters) + pack_array(np.packbits(self.bits))
        return IntrusionSnapshot(SNAPSHOT_KIND, header, payload)

    @classmethod
    def restore(cls, snap, seed=None) -> "CroppedSumState":
        """Rebuild from a snapshot; ``seed`` drives the coins used afterwards."""
        if isinstance(snap, (bytes, bytearray)):
            snap = IntrusionSnapshot.from_bytes(snap)
        if snap.kind != SNAPSHOT_KIND:
            raise SnapshotError(f"expected a {SNAPSHOT_KIND} snapshot, got {snap.kind}")
        hd = snap.header
        state = cls(hd["h"], hd["tau"], hd["priv_eps"], seed, _blank=True)
        counters, pos = unpack_array(snap.payload)
        packed, pos = unpack_array(snap.payload, pos)
        if pos != len(snap.payload) or len(counters) != state.h:
            raise SnapshotError("payload does not match header")
        if (counters < 0).any() or (counters >= state.tau).any():
            raise SnapshotError("counter outside [0, tau)")
        state.counters = counters.astype(np.int64)
        state.bits = np.unpackbits(packed, count=state.h).astype(bool)
        return state


def new(h, tau, priv_eps, seed=None) -> CroppedSumState:
    return CroppedSumState(h, tau, priv_eps, seed)
