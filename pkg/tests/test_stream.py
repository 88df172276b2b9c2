from collections import Counter

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from pansketch.errors import InputError, ModeViolation
from pansketch.stream import (CASH_REGISTER, TURNSTILE, StateVector, StreamSpec, Update, aggregate,
                              apply, clean, distinct_count, generate, make_neighbor, oracle_stats,
                              read_updates, stream_mass, write_updates, log2_bound_p)


def test_apply_single_update():
    s = apply(StateVector(10), Update(3, 2))
    assert s.a[3] == 2 and np.count_nonzero(s.a) == 1


def test_apply_cancellation_turnstile():
    s = StateVector.from_stream(10, [(3, 2)])
    assert apply(s, Update(3, -2)).a[3] == 0


def test_apply_cash_register_violation():
    s = StateVector.from_stream(10, [(3, 2)], CASH_REGISTER)
    with pytest.raises(ModeViolation):
        apply(s, Update(3, -5))


def test_apply_rejects_out_of_universe():
    with pytest.raises(InputError):
        apply(StateVector(4), Update(4, 1))


def test_oracle_examples():
    s = StateVector.from_vector([1, 2, 4])
    assert oracle_stats(s, "T", k=1, tau=3) == 6
    assert oracle_stats(s, "T", k=2, tau=3) == 7
    assert oracle_stats(StateVector.from_vector([6, 2, 2]), "HH", k=2) == 1
    assert oracle_stats(s, "distinct") == 3
    assert oracle_stats(s, "F", k=2) == 21


def test_oracle_dot():
    a = StateVector.from_vector([1, 3, 0])
    b = StateVector.from_vector([2, 3, 5])
    # min(1*2, 4) + min(9, 4) + 0
    assert oracle_stats(a, "dot", other=b, tau=4) == 6


def test_oracle_unknown_stat():
    with pytest.raises(InputError):
        oracle_stats(StateVector(3), "median")


def test_make_neighbor_examples():
    out, absent = make_neighbor([(1, 3), (2, 1)], 1, 5)
    assert out == [(5, 3), (2, 1)] and not absent
    out, absent = make_neighbor([(1, 2), (1, 1)], 1, 4)
    assert out == [(4, 3)] and not absent
    out, absent = make_neighbor([(2, 1)], 1, 5)
    assert out == [(2, 1)] and absent


def test_make_neighbor_same_ids():
    with pytest.raises(InputError):
        make_neighbor([(1, 1)], 2, 2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(-3, 3)), max_size=30),
       st.integers(0, 9), st.integers(0, 9), st.integers(0, 100))
def test_make_neighbor_preserves_mass_and_touches_two_coords(stream, src, dst, seed):
    if src == dst:
        dst = (src + 1) % 10
    out, _ = make_neighbor(stream, src, dst, m=10, shuffle_seed=seed)
    assert stream_mass(out) == stream_mass(clean(stream))
    a = StateVector.from_stream(10, stream).a
    b = StateVector.from_stream(10, out).a
    assert np.count_nonzero(a != b) <= 2


def test_distinct_oracle_matches_recount():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = rng.integers(0, 15)
        items = rng.integers(0, 8, size=n)
        deltas = rng.integers(-2, 3, size=n)
        stream = list(zip(items.tolist(), deltas.tolist()))
        net = Counter()
        for i, d in stream:
            net[i] += d
        assert distinct_count(StateVector.from_stream(8, stream)) == sum(v != 0 for v in net.values())


def test_generate_binary_support():
    stream = generate(StreamSpec(m=100_000, generator="binary-support", support=100, seed=7))
    assert oracle_stats(StateVector.from_stream(100_000, stream), "distinct") == 100


def test_generate_zipf_mass():
    stream = generate(StreamSpec(m=1000, generator="zipf", zipf_s=1.1, length=10_000, seed=1))
    assert stream_mass(stream) == 10_000


def test_generate_deterministic():
    spec = StreamSpec(m=500, generator="zipf", length=2000, seed=9)
    assert generate(spec) == generate(spec)


def test_generate_turnstile_deletions_net_distinct():
    spec = StreamSpec(m=1000, generator="uniform", length=600, seed=4, mode=TURNSTILE,
                      delete_fraction=0.3)
    stream = generate(spec)
    inserted = {u.item for u in stream if u.delta > 0}
    deleted = {u.item for u in stream if u.delta < 0}
    assert len(deleted) == round(0.3 * len(inserted))
    a = StateVector.from_stream(1000, stream)
    assert distinct_count(a) == len(inserted) - len(deleted)


def test_generate_unknown():
    with pytest.raises(InputError):
        generate(StreamSpec(m=10, generator="gaussian"))


def test_clean_drops_zero_deltas():
    assert clean([(1, 0), (2, 3)]) == [(2, 3)]


def test_update_file_round_trip(tmp_path):
    path = tmp_path / "s.updates"
    stream = [Update(4, 2), Update(1, -1), Update(7, 5)]
    write_updates(path, stream, header="three updates")
    assert read_updates(path) == stream
    assert np.array_equal(aggregate(stream, 8), [0, -1, 0, 0, 2, 0, 0, 5])


def test_update_file_errors(tmp_path):
    bad = tmp_path / "bad.updates"
    bad.write_text("# ok\n1 2\n3\n")
    with pytest.raises(InputError, match=":3:"):
        read_updates(bad)
    bad.write_text("x 1\n")
    with pytest.raises(InputError):
        read_updates(bad)


def test_p_bound_base_two():
    assert log2_bound_p(0.25, 16) == pytest.approx(0.0625)
