from itertools import combinations
import math

import numpy as np
import pytest

from pansketch import attack
from pansketch.attack import (BinarySecret, ExactDistinct, IntrusionOracle, PPTarget,
                              build_target, dot_decode, fork_and_query, hamming, probe,
                              union_decode, union_violation, verify_union)
from pansketch.errors import InputError, SnapshotError


def test_hamming_examples():
    x = np.array([1, 0, 1, 1, 0, 0, 1, 0])
    assert hamming(x, x) == 0
    assert hamming(x, 1 - x) == 8
    assert hamming([1, 0, 1, 1, 0], [1, 0, 0, 1, 1]) == 2
    with pytest.raises(InputError):
        hamming([1], [1, 0])


def test_secret_sparsity():
    s = BinarySecret.random(30, seed=1, L=4)
    assert s.x.sum() == 4 and len(s.stream()) == 4
    assert set(np.unique(BinarySecret.random(30, seed=1).x)) <= {0, 1}


def test_fork_empty_suffix_matches_pre_intrusion(small_cal):
    secret = BinarySecret.random(20, seed=2, L=5)
    target = attack.distinct.NoisySketch(
        attack.distinct.DistinctConfig(small_cal, 10, 1.0, 0.25, attack.distinct.DISABLED))
    target.update_many(secret.stream())
    oracle = IntrusionOracle(target.snapshot())
    assert fork_and_query(oracle, []) == target.estimate()


def test_identical_forks_identical_answers():
    secret = BinarySecret.random(24, seed=3, L=3)
    snap = build_target("ppdistinct", secret, alpha_total=1.0, seed=4)
    oracle = IntrusionOracle(snap)
    suffix = probe([0, 5, 9])
    assert oracle.query(suffix) == oracle.query(suffix)
    assert oracle.queries == 2


def test_exact_baseline_union_counts():
    secret = BinarySecret.random(12, seed=5, L=4)
    oracle = IntrusionOracle(build_target("exact", secret))
    for q in ([0, 1], [2, 7, 11], []):
        union = np.array(secret.x, dtype=bool)
        union[q] = True
        assert oracle.query(probe(q)) == union.sum()


def test_fork_isolation_checksum():
    secret = BinarySecret.random(24, seed=6, L=3)
    snap = build_target("ppdistinct", secret, alpha_total=10.0, seed=1)
    before = snap.checksum
    oracle = IntrusionOracle(snap)
    for q in ([], [1], [2, 3], list(range(24))):
        fork_and_query(oracle, probe(q))
    assert snap.checksum == before
    assert oracle.fork().acc == IntrusionOracle(snap).fork().acc


def test_oracle_rejects_wrong_target():
    snap = build_target("exact", BinarySecret.random(8, seed=1, L=2))
    with pytest.raises(SnapshotError):
        IntrusionOracle(snap, target="pp-distinct")
    with pytest.raises(InputError):
        build_target("sampling", BinarySecret.random(8, seed=1, L=2))


def test_union_decode_small_exact_unique():
    n, L = 8, 2
    secret = BinarySecret(n, np.isin(np.arange(n), [2, 5]).astype(np.int8), L)
    oracle = IntrusionOracle(build_target("exact", secret))
    res = union_decode(oracle, n, L, 0, 0, secret)
    assert res.feasible and res.hamming_error == 0
    assert list(np.flatnonzero(res.x_tilde)) == [2, 5]
    # brute force: every candidate of weight <= 2 (37 of them), exactly one feasible
    cands = np.array([sum(1 << i for i in c) for w in range(L + 1)
                      for c in combinations(range(n), w)], dtype=np.uint64)
    assert len(cands) == 37
    queries = attack._masks(n, L)
    feasible = union_violation(cands, queries, res.answers, 0, 0) == 0
    assert feasible.sum() == 1


def test_union_decode_soundness():
    for seed in range(5):
        secret = BinarySecret.random(12, seed=seed, L=2)
        oracle = IntrusionOracle(build_target("exact", secret), answer_noise=1, seed=seed)
        res = union_decode(oracle, 12, 2, 0.0, 1.0, secret)
        if res.feasible:
            assert verify_union(res.x_tilde, res.answers, 2, 0.0, 1.0)


def test_union_decode_limit():
    with pytest.raises(InputError):
        union_decode(None, 63, 1)


def test_dot_decode_exact():
    for seed in range(5):
        secret = BinarySecret.random(16, seed=seed)
        oracle = IntrusionOracle(build_target("exact", secret))
        res = dot_decode(oracle, 16, 256, secret, seed)
        assert res.hamming_error == 0 and res.queries_used == 257


def test_dot_decode_small_noise():
    n = 16
    w = math.floor(math.sqrt(n) / 4)
    good = 0
    for seed in range(20):
        secret = BinarySecret.random(n, seed=100 + seed)
        oracle = IntrusionOracle(build_target("exact", secret), answer_noise=w, seed=seed)
        good += dot_decode(oracle, n, 256, secret, seed).hamming_error <= n / 10
    assert good >= 18


def test_noisy_target_shares_noise_across_budgets():
    secret = BinarySecret.random(10, seed=1, L=2)
    pp = PPTarget(r=32, sfp_samples=100_000)
    a = IntrusionOracle(build_target("ppdistinct", secret, 1.0, seed=2, pp=pp)).fork()
    b = IntrusionOracle(build_target("ppdistinct", secret, 0.1, seed=2, pp=pp)).fork()
    quiet = IntrusionOracle(build_target("ppdistinct", secret, math.inf, seed=2, pp=pp)).fork()
    # the noise part scales by 10, up to float rounding of the noise factor
    for x, y, z in zip(a.acc, b.acc, quiet.acc):
        assert abs((y - z) - 10 * (x - z)) * 10 ** 13 <= abs(y - z)


def test_exact_distinct_round_trip():
    est = ExactDistinct(6).update(1, 2).update(4, 1)
    back = ExactDistinct.restore(est.snapshot().to_bytes())
    assert back.estimate() == 2 and np.array_equal(back.state.a, est.state.a)
