"""Pan-private count of k-heavy hitters by universe reduction.

Items are hashed into h buckets and two cropped-sum estimators run on the
hashed stream, cropped at F1/k and F1/(ck). A bucket whose load reaches F1/k
contributes exactly tau_hi - tau_lo to the difference, so the rescaled
difference counts heavy buckets. When F1 is not known in advance an ensemble
of such pairs runs at F1' = 1, 2, 4, ..., and the query picks the member
matching the public running total.
"""

from dataclasses import dataclass
from fractions import Fraction
import math
from typing import Optional

import numpy as np

from .cropped_sum import CroppedSumState
from .errors import ConfigError, InputError, ModeViolation, SnapshotError, UndefinedStatistic
from .keyed import derive_seed, keyed_words
from .snapshot import IntrusionSnapshot
from .stream import clean, stream_arrays

MERSENNE31 = (1 << 31) - 1
SNAPSHOT_KIND = "heavy-hitters"


def _exact(x):
    return Fraction(x) if isinstance(x, int) else Fraction(str(x))


def choose_h(k, c, beta, delta) -> int:
    """Smallest h with h >= k / (beta delta) and h >= (sqrt 2 + 2) c k."""
    if min(k, beta, delta) <= 0 or c <= 1:
        raise ConfigError("need k, beta, delta > 0 and c > 1")
    first = math.ceil(_exact(k) / (_exact(beta) * _exact(delta)))
    ck = _exact(c) * _exact(k)

    def enough(n):
        # n >= (sqrt 2 + 2) ck, decided in exact arithmetic
        return n >= 2 * ck and (n - 2 * ck) ** 2 >= 2 * ck ** 2

    n = math.floor((math.sqrt(2) + 2) * float(ck))
    while not enough(n):
        n += 1
    while n > 0 and enough(n - 1):
        n -= 1
    return max(first, n)


class PairwiseHash:
    """f(x) = ((a x + b) mod (2^31 - 1)) mod h with keyed a, b."""

    def __init__(self, key, h):
        self.key = int(key)
        self.h = int(h)
        self.a = 1 + int(keyed_words(key, 0, 0)) % (MERSENNE31 - 1)
        self.b = int(keyed_words(key, 0, 1)) % MERSENNE31

    def __call__(self, items):
        x = np.asarray(items, dtype=np.uint64)
        if x.size and x.max() >= MERSENNE31:
            raise InputError("item ids must be below 2^31 - 1")
        v = (np.uint64(self.a) * x + np.uint64(self.b)) % np.uint64(MERSENNE31) % np.uint64(self.h)
        out = v.astype(np.int64)
        return int(out) if out.ndim == 0 else out


def hashed_loads(a, f: PairwiseHash, mask=None) -> np.ndarray:
    """Bucket loads N_j = sum of a_i over items hashed to j."""
    a = np.asarray(a)
    if mask is not None:
        a = np.where(mask, a, 0)
    return np.bincount(f(np.arange(len(a))), weights=a, minlength=f.h)


def cropping_levels(f1, k, c):
    """(tau_hi, tau_lo) = (ceil(F1/k), ceil(F1/(ck)))."""
    return math.ceil(_exact(f1) / _exact(k)), math.ceil(_exact(f1) / (_exact(c) * _exact(k)))


def noiseless_core(a, f: PairwiseHash, f1, k, c) -> float:
    """(T_1(tau_hi | f) - T_1(tau_lo | f)) / (tau_hi - tau_lo) from exact loads."""
    hi, lo = cropping_levels(f1, k, c)
    if hi == lo:
        raise UndefinedStatistic("F1 too small to separate the two cropping levels")
    loads = hashed_loads(a, f)
    return float(np.minimum(loads, hi).sum() - np.minimum(loads, lo).sum()) / (hi - lo)


def separated_buckets(a, f: PairwiseHash, k) -> int:
    """Number of buckets holding at least one item with a_i >= F1/k."""
    a = np.asarray(a)
    f1 = np.abs(a).sum()
    heavy = np.flatnonzero(a * k >= f1) if f1 else np.zeros(0, dtype=int)
    return len(np.unique(f(heavy))) if len(heavy) else 0


def additive_envelope(c, alpha, h, priv_eps):
    """4 (c+1) alpha sqrt(h) / ((c-1) eps)."""
    return 4.0 * (c + 1) * alpha * math.sqrt(h) / ((c - 1) * priv_eps)


@dataclass(frozen=True)
class HHConfig:
    k: float
    c: float = 2.0
    beta: float = 0.5
    delta: float = 0.1
    priv_eps: float = 0.5
    h: Optional[int] = None
    hash_key: int = 0
    f1: Optional[int] = None
    u0: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if (self.f1 is None) == (self.u0 is None):
            raise ConfigError("give exactly one of f1 (known) or u0 (upper bound)")
        need = choose_h(self.k, self.c, self.beta, self.delta)
        if self.h is None:
            object.__setattr__(self, "h", need)
        elif self.h < need:
            raise ConfigError(f"h = {self.h} below the required {need}")
        if self.f1 is not None and self.f1 < 1:
            raise ConfigError("f1 must be positive")
        if self.u0 is not None and self.u0 < 1:
            raise ConfigError("u0 must be positive")

    @property
    def levels(self):
        """F1' values of the members: [f1] or 1, 2, ..., 2^ceil(log2 u0)."""
        if self.f1 is not None:
            return [int(self.f1)]
        top = max(0, math.ceil(math.log2(self.u0)))
        return [1 << e for e in range(top + 1)]

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("k", "c", "beta", "delta", "priv_eps", "h", "hash_key", "f1", "u0", "seed")}


class _Member:

    def __init__(self, f1, cfg, seed, states=None):
        self.f1 = f1
        self.tau_hi, self.tau_lo = cropping_levels(f1, cfg.k, cfg.c)
        if states is not None:
            self.hi, self.lo = states
        else:
            self.hi = CroppedSumState(cfg.h, self.tau_hi, cfg.priv_eps, derive_seed(seed, "hi"))
            self.lo = CroppedSumState(cfg.h, self.tau_lo, cfg.priv_eps, derive_seed(seed, "lo"))

    def estimate(self):
        if self.tau_hi == self.tau_lo:
            raise UndefinedStatistic(f"member F1'={self.f1} has equal cropping levels")
        return (self.hi.estimate() - self.lo.estimate()) / (self.tau_hi - self.tau_lo)


class HHEstimator:

    def __init__(self, config: HHConfig, _members=None, _f1_seen=0):
        self.config = config
        self.hash = PairwiseHash(config.hash_key, config.h)
        self.f1_seen = _f1_seen
        if _members is not None:
            self.members = _members
        else:
            self.members = [_Member(f, config, derive_seed(config.seed, f"member-{f}"))
                            for f in config.levels]

    @property
    def privacy_spend(self):
        return 2.0 * self.config.priv_eps * len(self.members)

    def update(self, item, delta=1):
        item, delta = int(item), int(delta)
        if delta < 0:
            raise ModeViolation("heavy hitters accepts cash-register updates only")
        bucket = self.hash(item)
        for mb in self.members:
            mb.hi.update(bucket, delta)
            mb.lo.update(bucket, delta)
        self.f1_seen += delta
        return self

    def ingest(self, stream):
        items, deltas = stream_arrays(clean(stream))
        if (deltas < 0).any():
            raise ModeViolation("heavy hitters accepts cash-register updates only")
        loads = np.bincount(self.hash(items), weights=deltas, minlength=self.config.h) \
            if len(items) else np.zeros(self.config.h)
        for mb in self.members:
            mb.hi.ingest_counts(loads)
            mb.lo.ingest_counts(loads)
        self.f1_seen += int(deltas.sum())
        return self

    def member_for(self, f1):
        if f1 <= 0:
            raise UndefinedStatistic("F1 = 0: heavy hitters undefined")
        if self.config.f1 is not None:
            return self.members[0]
        target = 1 << max(0, math.ceil(math.log2(f1)))
        for mb in self.members:
            if mb.f1 == target:
                return mb
        raise UndefinedStatistic(f"F1 = {f1} exceeds the bound u0 = {self.config.u0}")

    def estimate(self, f1=None) -> float:
        """Raw estimate; may be negative. ``f1`` defaults to the public running total."""
        f1 = self.f1_seen if f1 is None else f1
        return self.member_for(f1).estimate()

    def snapshot(self) -> IntrusionSnapshot:
        blobs, lens = [], []
        for mb in self.members:
            for st in (mb.hi, mb.lo):
                b = st.snapshot().to_bytes()
                blobs.append(b)
                lens.append(len(b))
        header = {"config": self.config.to_dict(), "f1_seen": self.f1_seen, "lens": lens}
        return IntrusionSnapshot(SNAPSHOT_KIND, header, b"".join(blobs))

    @classmethod
    def restore(cls, snap, seed=None):
        if isinstance(snap, (bytes, bytearray)):
            snap = IntrusionSnapshot.from_bytes(snap)
        if snap.kind != SNAPSHOT_KIND:
            raise SnapshotError(f"expected a {SNAPSHOT_KIND} snapshot, got {snap.kind}")
        cfg = HHConfig(**snap.header["config"])
        lens = snap.header["lens"]
        if len(lens) != 2 * len(cfg.levels) or sum(lens) != len(snap.payload):
            raise SnapshotError("member layout does not match config")
        states, pos = [], 0
        for n_idx, n in enumerate(lens):
            sub = None if seed is None else derive_seed(seed, f"restore-{n_idx}")
            states.append(CroppedSumState.restore(snap.payload[pos:pos + n], sub))
            pos += n
        members = [_Member(f, cfg, 0, (states[2 * i], states[2 * i + 1]))
                   for i, f in enumerate(cfg.levels)]
        return cls(cfg, members, int(snap.header["f1_seen"]))
