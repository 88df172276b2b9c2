"""Single-intrusion reconstruction attacks.

The adversary copies an estimator's memory once, then replays many
independent continuations from that copy. Each continuation appends a probe
stream and reads the answer. Two decoders turn the answers back into the
secret binary input:

* union queries: answers approximate ||x OR q||_0 for every q of weight at
  most L; any sparse x~ consistent with every answer is returned;
* dot-product queries: random binary q, answers converted to x . q by
  inclusion-exclusion, then least squares and rounding.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
import math
import time

import numpy as np

from . import distinct
from .errors import InputError, SnapshotError
from .keyed import derive_seed
from .snapshot import IntrusionSnapshot, pack_array, unpack_array
from .stable import Calibration, StableParams, column_norms, estimate_sfp
from .stream import StateVector, Update, distinct_count

EXACT_KIND = "exact-distinct"
TARGETS = ("exact", "ppdistinct")


class ExactDistinct:
    """Non-private baseline: keeps the full state vector, answers D exactly."""

    def __init__(self, m, a=None):
        self.state = StateVector(m)
        if a is not None:
            self.state.a[:] = a

    def update(self, item, delta=None):
        if delta is None:
            item, delta = item
        self.state.apply(Update(int(item), int(delta)))
        return self

    def update_many(self, stream):
        for u in stream:
            self.update(u)
        return self

    def estimate(self):
        return float(distinct_count(self.state))

    def copy(self):
        return ExactDistinct(self.state.m, self.state.a)

    def snapshot(self):
        return IntrusionSnapshot(EXACT_KIND, {"m": self.state.m}, pack_array(self.state.a))

    @classmethod
    def restore(cls, snap):
        if isinstance(snap, (bytes, bytearray)):
            snap = IntrusionSnapshot.from_bytes(snap)
        if snap.kind != EXACT_KIND:
            raise SnapshotError(f"expected a {EXACT_KIND} snapshot, got {snap.kind}")
        a, _ = unpack_array(snap.payload)
        if len(a) != snap.header["m"]:
            raise SnapshotError("state length does not match header")
        return cls(snap.header["m"], a)


_RESTORERS = {
    EXACT_KIND: ExactDistinct.restore,
    distinct.SNAPSHOT_KIND: distinct.NoisySketch.restore,
}


class IntrusionOracle:
    """Replays continuations from one frozen snapshot.

    The snapshot is decoded and checked once; every query then runs on a
    fresh copy of that decoded state, so queries never see one another.
    """

    def __init__(self, snapshot: IntrusionSnapshot, target=None, answer_noise=0, seed=0):
        if isinstance(snapshot, (bytes, bytearray)):
            snapshot = IntrusionSnapshot.from_bytes(snapshot)
        if target is not None and snapshot.kind != target:
            raise SnapshotError(f"snapshot holds {snapshot.kind}, oracle expects {target}")
        if snapshot.kind not in _RESTORERS:
            raise SnapshotError(f"no replay support for {snapshot.kind}")
        self.snapshot = snapshot
        self.target = snapshot.kind
        self._template = _RESTORERS[snapshot.kind](snapshot)
        self.answer_noise = int(answer_noise)
        self._noise_rng = np.random.default_rng(seed)
        self.queries = 0

    def fork(self):
        return self._template.copy()

    def query(self, suffix) -> float:
        est = self.fork()
        for u in suffix:
            est.update(u)
        self.queries += 1
        ans = est.estimate()
        if self.answer_noise:
            ans += int(self._noise_rng.integers(-self.answer_noise, self.answer_noise + 1))
        return ans


def fork_and_query(oracle: IntrusionOracle, suffix) -> float:
    return oracle.query(suffix)


def hamming(x, y) -> int:
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape:
        raise InputError("vectors differ in length")
    return int(np.count_nonzero(x != y))


@dataclass
class BinarySecret:
    n: int
    x: np.ndarray
    L: int = 0

    @classmethod
    def random(cls, n, seed, L=None):
        """Uniform bits, or (with ``L``) a uniformly placed support of size L."""
        rng = np.random.default_rng(seed)
        if L is None:
            return cls(n, rng.integers(0, 2, size=n).astype(np.int8), 0)
        x = np.zeros(n, dtype=np.int8)
        x[rng.choice(n, size=L, replace=False)] = 1
        return cls(n, x, L)

    def stream(self):
        return [Update(int(i), 1) for i in np.flatnonzero(self.x)]


@dataclass
class ReconstructionResult:
    x_tilde: np.ndarray
    hamming_error: int
    queries_used: int
    wall_time: float
    feasible: bool = True
    answers: np.ndarray = field(default=None, repr=False)


def probe(indices):
    return [Update(int(i), 1) for i in indices]


def _popcount(v):
    return np.bitwise_count(v)


def _masks(n, max_weight):
    """Bitmasks of every subset of [n] with weight <= max_weight, by weight."""
    return np.concatenate([_masks_of_weight(n, w) for w in range(max_weight + 1)])


@lru_cache(maxsize=64)
def _masks_of_weight(n, w):
    return np.array([sum(1 << i for i in comb) for comb in combinations(range(n), w)],
                    dtype=np.uint64)


def union_violation(cands, queries, answers, alpha1, alpha2):
    """Total constraint violation of each candidate mask (0 means feasible)."""
    u = _popcount(cands[:, None] | queries[None, :]).astype(float)
    lo = (1 - alpha1) * u - alpha2
    hi = (1 + alpha1) * u + alpha2
    a = answers[None, :]
    return (np.maximum(lo - a, 0) + np.maximum(a - hi, 0)).sum(axis=1)


def union_decode(oracle, n, L, alpha1=0.0, alpha2=0.0, secret=None, block=64):
    """Decode a sparse secret from union queries.

    Queries every subset of [n] of size <= L (the empty one first), then
    scans candidates by increasing weight. The empty query fixes which
    weights are admissible; inside a level, candidates are dropped as soon as
    a block of queries rules them out. Returns the first candidate satisfying
    every constraint, or, if none does, the least-violating one with
    ``feasible=False``.
    """
    if n > 62:
        raise InputError("union decoding supports n <= 62")
    t0 = time.perf_counter()
    queries = _masks(n, L)
    answers = np.array([oracle.query(probe(i for i in range(n) if (int(q) >> i) & 1))
                        for q in queries])
    found = None
    a0 = answers[0]
    for w in range(L + 1):
        if (1 - alpha1) * w - alpha2 > a0 or a0 > (1 + alpha1) * w + alpha2:
            continue
        alive = _masks_of_weight(n, w)
        for start in range(0, len(queries), block):
            qs = queries[start:start + block]
            ok = union_violation(alive, qs, answers[start:start + block], alpha1, alpha2) == 0
            alive = alive[ok]
            if not len(alive):
                break
        if len(alive):
            found = alive[0]
            break
    feasible = found is not None
    if not feasible:
        # no candidate honours the promise: fall back to least total violation
        scores = union_violation(queries, queries, answers, alpha1, alpha2)
        found = queries[int(np.argmin(scores))]
    x_tilde = np.array([(int(found) >> i) & 1 for i in range(n)], dtype=np.int8)
    err = hamming(secret.x, x_tilde) if secret is not None else -1
    return ReconstructionResult(x_tilde, err, len(queries), time.perf_counter() - t0,
                                feasible, answers)


def verify_union(x_tilde, answers, L, alpha1, alpha2) -> bool:
    """Recheck every union constraint for a decoded vector."""
    n = len(x_tilde)
    mask = np.array([sum(1 << int(i) for i in np.flatnonzero(x_tilde))], dtype=np.uint64)
    return bool(union_violation(mask, _masks(n, L), answers, alpha1, alpha2)[0] == 0)


def random_queries(n, num_queries, rng, max_tries=20):
    for _ in range(max_tries):
        q = rng.integers(0, 2, size=(num_queries, n)).astype(np.int8)
        if np.linalg.matrix_rank(q.astype(float)) == n:
            return q
    raise InputError("could not draw a full-rank query matrix")


def dot_decode(oracle, n, num_queries=None, secret=None, seed=0):
    """Decode a binary secret from distinct counts of probe-extended streams.

    x . q = D(S) + |q| - D(S + S_q); D(S) comes from the empty probe.
    """
    t0 = time.perf_counter()
    if num_queries is None:
        num_queries = math.ceil(n * math.log2(n) ** 2)
    rng = np.random.default_rng(seed)
    q = random_queries(n, num_queries, rng)
    base = oracle.query([])
    dots = np.array([base + row.sum() - oracle.query(probe(np.flatnonzero(row))) for row in q])
    sol, *_ = np.linalg.lstsq(q.astype(float), dots, rcond=None)
    x_tilde = (sol >= 0.5).astype(np.int8)
    err = hamming(secret.x, x_tilde) if secret is not None else -1
    return ReconstructionResult(x_tilde, err, num_queries + 1, time.perf_counter() - t0,
                                True, dots)


@dataclass(frozen=True)
class PPTarget:
    """Parameters of the pan-private distinct sketch being attacked."""
    p: float = 0.2
    r: int = 128
    Z: int = 2
    approx_eps: float = 0.25
    sfp_samples: int = 200_000


@lru_cache(maxsize=32)
def _calibration(p, r, m, master_seed, sfp_samples):
    params = StableParams(p, r, m, master_seed)
    sfp = estimate_sfp(p, sfp_samples, seed=0)
    return Calibration(params, sfp, tuple(float(v) for v in column_norms(params)), sfp_samples, 0)


def build_target(kind, secret: BinarySecret, alpha_total=math.inf, seed=0, pp: PPTarget = PPTarget()):
    """Run the secret stream through a target and take the intrusion snapshot.

    ``alpha_total = inf`` gives the noiseless sketch. The noise seed is shared
    across budgets for a fixed ``seed``, so sweeps over alpha_total rescale
    one noise draw instead of drawing fresh noise.
    """
    if kind == "exact":
        est = ExactDistinct(secret.n)
    elif kind == "ppdistinct":
        cal = _calibration(pp.p, pp.r, secret.n, derive_seed(seed, "matrix"), pp.sfp_samples)
        mode = distinct.DISABLED if math.isinf(alpha_total) else distinct.STANDARD
        alpha = 1.0 if mode == distinct.DISABLED else alpha_total / pp.r
        cfg = distinct.DistinctConfig(cal, pp.Z, alpha, pp.approx_eps, mode,
                                      derive_seed(seed, "noise"))
        est = distinct.NoisySketch(cfg)
    else:
        raise InputError(f"unknown target {kind!r}; expected one of {TARGETS}")
    est.update_many(secret.stream())
    return est.snapshot()
