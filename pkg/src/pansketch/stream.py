"""Update streams, exact state vectors and ground-truth statistics.

Nothing in this module is private. The exact oracles here are what every
estimator is measured against.
"""

from dataclasses import dataclass, field
import math
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InputError, ModeViolation

CASH_REGISTER = "cash-register"
TURNSTILE = "turnstile"
MODES = (CASH_REGISTER, TURNSTILE)


class Update(NamedTuple):
    item: int
    delta: int


def check_update(u, m, mode=TURNSTILE):
    if not 0 <= u.item < m:
        raise InputError(f"item {u.item} outside universe [0, {m})")
    if mode == CASH_REGISTER and u.delta < 0:
        raise ModeViolation(f"negative delta {u.delta} in cash-register mode")


def clean(updates: Iterable) -> list:
    """Coerce pairs to Updates and drop zero deltas."""
    out = []
    for item, delta in updates:
        if delta:
            out.append(Update(int(item), int(delta)))
    return out


def stream_mass(stream) -> int:
    """Sum of deltas; the public first moment preserved by neighbors."""
    return sum(u.delta for u in stream)


class StateVector:
    """Exact frequency vector a over the universe [0, m)."""

    def __init__(self, m: int, mode: str = TURNSTILE):
        if m < 1:
            raise InputError("universe size must be positive")
        if mode not in MODES:
            raise InputError(f"unknown mode {mode!r}")
        self.m = m
        self.mode = mode
        self.a = np.zeros(m, dtype=np.int64)

    @classmethod
    def from_stream(cls, m, stream, mode=TURNSTILE):
        state = cls(m, mode)
        for u in clean(stream):
            state.apply(u)
        return state

    @classmethod
    def from_vector(cls, a, mode=TURNSTILE):
        a = np.asarray(a, dtype=np.int64)
        state = cls(len(a), mode)
        if mode == CASH_REGISTER and (a < 0).any():
            raise ModeViolation("negative entries in cash-register state")
        state.a[:] = a
        return state

    def apply(self, u: Update) -> "StateVector":
        check_update(u, self.m, self.mode)
        self.a[u.item] += u.delta
        return self

    def copy(self):
        other = StateVector(self.m, self.mode)
        other.a[:] = self.a
        return other

    def __eq__(self, other):
        return (isinstance(other, StateVector) and self.m == other.m
                and np.array_equal(self.a, other.a))

    def __repr__(self):
        return f"StateVector(m={self.m}, mode={self.mode!r}, D={distinct_count(self.a)})"


def apply(state: StateVector, u: Update) -> StateVector:
    return state.apply(u)


def _vec(a):
    if isinstance(a, StateVector):
        return a.a
    return np.asarray(a, dtype=np.int64)


def distinct_count(a) -> int:
    return int(np.count_nonzero(_vec(a)))


def frequency_moment(a, k) -> float:
    a = np.abs(_vec(a)).astype(float)
    return float(np.sum(a[a > 0] ** k))


def cropped_moment(a, k, tau) -> float:
    """T_k(tau) = sum_i min(|a_i|^k, tau)."""
    if tau <= 0:
        raise InputError("tau must be positive")
    a = np.abs(_vec(a)).astype(float)
    return float(np.sum(np.minimum(a ** k, tau)))


def heavy_hitters_count(a, k) -> int:
    """Number of items with |a_i| >= F_1 / k."""
    if k < 1:
        raise InputError("k must be at least 1")
    a = np.abs(_vec(a))
    f1 = int(a.sum())
    if f1 == 0:
        return 0
    # integer form of |a_i| >= f1 / k
    return int(np.count_nonzero(a * k >= f1))


def cropped_dot(a, b, tau) -> float:
    """(a . b)(tau) = sum_i min(a_i b_i, tau)."""
    if tau <= 0:
        raise InputError("tau must be positive")
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise InputError("state vectors differ in length")
    return float(np.sum(np.minimum(a.astype(float) * b, tau)))


def oracle_stats(state, which: str, **params) -> float:
    """Exact value of a named statistic.

    ``which`` is one of ``distinct``, ``F`` (needs ``k``), ``T`` (``k``, ``tau``),
    ``HH`` (``k``) or ``dot`` (``other``, ``tau``).
    """
    if which == "distinct":
        return distinct_count(state)
    if which == "F":
        return frequency_moment(state, params["k"])
    if which == "T":
        return cropped_moment(state, params.get("k", 1), params["tau"])
    if which == "HH":
        return heavy_hitters_count(state, params["k"])
    if which == "dot":
        return cropped_dot(state, params["other"], params["tau"])
    raise InputError(f"unknown statistic {which!r}")


def make_neighbor(stream, from_id, to_id, m=None, shuffle_seed=None):
    """Move every occurrence of ``from_id`` onto ``to_id``.

    The moved mass is emitted as one merged update at the position of the
    first occurrence. Returns ``(neighbor, absent)``; when ``from_id`` never
    occurs the input comes back unchanged with ``absent=True``.
    """
    if from_id == to_id:
        raise InputError("from_id and to_id must differ")
    if m is not None and not (0 <= from_id < m and 0 <= to_id < m):
        raise InputError("ids outside the universe")
    stream = clean(stream)
    positions = [k for k, u in enumerate(stream) if u.item == from_id]
    if not positions:
        return list(stream), True
    moved = sum(stream[k].delta for k in positions)
    out = []
    for k, u in enumerate(stream):
        if k == positions[0]:
            if moved:
                out.append(Update(to_id, moved))
        elif u.item != from_id:
            out.append(u)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(out))
        out = [out[k] for k in order]
    return out, False


@dataclass(frozen=True)
class StreamSpec:
    """Recipe for a synthetic stream.

    generator: ``uniform``, ``zipf``, ``binary-support`` or ``explicit``.
    In turnstile mode, ``delete_fraction`` of the inserted distinct items are
    deleted again at the end of the stream, so the net D is known exactly.
    """
    m: int
    generator: str = "uniform"
    length: int = 0
    seed: int = 0
    mode: str = CASH_REGISTER
    zipf_s: float = 1.1
    support: int = 0
    updates: Optional[Sequence] = field(default=None, compare=False)
    delete_fraction: float = 0.0


def _zipf_items(rng, m, s, t):
    ranks = np.arange(1, m + 1, dtype=float)
    p = ranks ** -s
    p /= p.sum()
    labels = rng.permutation(m)
    return labels[rng.choice(m, size=t, p=p)]


def generate(spec: StreamSpec) -> list:
    if spec.mode not in MODES:
        raise InputError(f"unknown mode {spec.mode!r}")
    rng = np.random.default_rng(spec.seed)
    if spec.generator == "uniform":
        items = rng.integers(0, spec.m, size=spec.length)
    elif spec.generator == "zipf":
        items = _zipf_items(rng, spec.m, spec.zipf_s, spec.length)
    elif spec.generator == "binary-support":
        if spec.support > spec.m:
            raise InputError("support larger than the universe")
        items = rng.permutation(rng.choice(spec.m, size=spec.support, replace=False))
    elif spec.generator == "explicit":
        stream = clean(spec.updates or [])
        for u in stream:
            check_update(u, spec.m, spec.mode)
        return stream
    else:
        raise InputError(f"unknown generator {spec.generator!r}")
    stream = [Update(int(i), 1) for i in items]
    if spec.mode == TURNSTILE and spec.delete_fraction > 0:
        counts = {}
        for u in stream:
            counts[u.item] = counts.get(u.item, 0) + 1
        keys = sorted(counts)
        n_del = int(round(spec.delete_fraction * len(keys)))
        doomed = rng.choice(len(keys), size=n_del, replace=False)
        stream += [Update(keys[j], -counts[keys[j]]) for j in sorted(doomed)]
    return stream


def stream_arrays(stream):
    """(items, deltas) as int64 arrays."""
    if not stream:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    arr = np.asarray(stream, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0].copy(), arr[:, 1].copy()


def aggregate(stream, m):
    """Per-item net deltas of a stream as a dense vector."""
    items, deltas = stream_arrays(stream)
    if len(items) and (items.min() < 0 or items.max() >= m):
        raise InputError("item outside the universe")
    return np.bincount(items, weights=deltas, minlength=m).astype(np.int64)


def read_updates(path) -> list:
    """Parse an update file: ``<item> <delta>`` per line, ``#`` comments."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected '<item> <delta>'")
            try:
                item, delta = int(parts[0]), int(parts[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-integer field") from None
            if item < 0:
                raise InputError(f"{path}:{lineno}: negative item id")
            if delta:
                out.append(Update(item, delta))
    return out


def write_updates(path, stream, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for u in stream:
            fh.write(f"{u.item} {u.delta}\n")


def log2_bound_p(approx_eps, Z):
    """Largest admissible p boundary approx_eps / log2(Z)."""
    if Z < 2:
        raise InputError("Z must be at least 2")
    return approx_eps / math.log2(Z)
