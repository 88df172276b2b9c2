"""Pan-private cropped dot product (a . a')(tau), and T_2(tau) as its self-pairing.

Two independent cropped-sum structures with modulus sqrt(tau), one per
stream. For each item the two bits are independent with
P(b_i = 1) = 1/2 + eps min(a_i, sqrt tau) / (4 sqrt tau), so the count of
items with both bits set has mean

    m/4 + eps T_1(sqrt tau) / (8 sqrt tau) + eps T_1'(sqrt tau) / (8 sqrt tau)
        + eps^2 (a . a')(tau) / (16 tau).

Subtracting the per-side terms, estimated from the same bits, and rescaling
gives an unbiased estimate.
"""

import math

import numpy as np

from .cropped_sum import CroppedSumState
from .errors import InputError, SnapshotError
from .keyed import derive_seed
from .snapshot import IntrusionSnapshot

SNAPSHOT_KIND = "dot-pair"


def _root(tau):
    tau = int(tau)
    s = math.isqrt(tau) if tau >= 1 else 0
    if tau < 1 or s * s != tau:
        raise InputError(f"tau must be a perfect square >= 1, got {tau}")
    return s


class DotPairState:

    def __init__(self, m, tau, priv_eps, seed=0, *, _sides=None):
        self.m = int(m)
        self.tau = int(tau)
        self.root = _root(tau)
        self.priv_eps = float(priv_eps)
        if _sides is not None:
            self.left, self.right = _sides
            return
        self.left = CroppedSumState(m, self.root, priv_eps, derive_seed(seed, "left"))
        self.right = CroppedSumState(m, self.root, priv_eps, derive_seed(seed, "right"))

    @property
    def privacy_spend(self):
        return 2.0 * self.priv_eps

    def update_left(self, item, delta=1):
        self.left.update(item, delta)
        return self

    def update_right(self, item, delta=1):
        self.right.update(item, delta)
        return self

    def update_both(self, item, delta=1):
        """Self-pairing for T_2: the same update reaches both sides."""
        self.left.update(item, delta)
        self.right.update(item, delta)
        return self

    def ingest(self, left=(), right=()):
        self.left.ingest(left)
        self.right.ingest(right)
        return self

    def joint_ones(self) -> int:
        return int(np.count_nonzero(self.left.bits & self.right.bits))

    def estimate_dot(self) -> float:
        scale = self.priv_eps / (8.0 * self.root)
        o = self.joint_ones()
        t_left = self.left.estimate()
        t_right = self.right.estimate()
        return (o - scale * t_left - scale * t_right - self.m / 4.0) * 16.0 * self.tau / self.priv_eps ** 2

    estimate_t2 = estimate_dot

    def error_bound(self, alpha) -> float:
        """16 alpha tau sqrt(m) / eps^2 (1 + eps / (4 sqrt tau))."""
        return (16.0 * alpha * self.tau * math.sqrt(self.m) / self.priv_eps ** 2
                * (1.0 + self.priv_eps / (4.0 * self.root)))

    def snapshot(self) -> IntrusionSnapshot:
        left = self.left.snapshot().to_bytes()
        header = {"m": self.m, "tau": self.tau, "priv_eps": self.priv_eps, "left_len": len(left)}
        return IntrusionSnapshot(SNAPSHOT_KIND, header, left + self.right.snapshot().to_bytes())

    @classmethod
    def restore(cls, snap, seed=None):
        if isinstance(snap, (bytes, bytearray)):
            snap = IntrusionSnapshot.from_bytes(snap)
        if snap.kind != SNAPSHOT_KIND:
            raise SnapshotError(f"expected a {SNAPSHOT_KIND} snapshot, got {snap.kind}")
        hd = snap.header
        cut = hd["left_len"]
        seeds = (None, None) if seed is None else (derive_seed(seed, "left"), derive_seed(seed, "right"))
        left = CroppedSumState.restore(snap.payload[:cut], seeds[0])
        right = CroppedSumState.restore(snap.payload[cut:], seeds[1])
        return cls(hd["m"], hd["tau"], hd["priv_eps"], _sides=(left, right))


def new_pair(m, tau, priv_eps, seed=0) -> DotPairState:
    return DotPairState(m, tau, priv_eps, seed)
