import numpy as np

from dememlab.rng import RngStream


def test_same_stream_replays_identically():
    a = RngStream(42, 7).generator().normal(size=100)
    b = RngStream(42, 7).generator().normal(size=100)
    assert np.array_equal(a, b)


def test_child_streams_are_deterministic():
    s = RngStream(42)
    assert s.child("alpha") == s.child("alpha")
    assert s.child("alpha") != s.child("beta")
    assert s.child(("tag", 3)) == s.child(("tag", 3))


def test_distinct_streams_are_uncorrelated():
    n = 10_000
    a = RngStream(42).child("a").generator().normal(size=n)
    b = RngStream(42).child("b").generator().normal(size=n)
    corr = float(np.dot(a - a.mean(), b - b.mean()) / (n * a.std() * b.std()))
    assert abs(corr) < 4.0 / np.sqrt(n)


def test_master_seed_changes_draws():
    a = RngStream(1).child("x").generator().normal(size=10)
    b = RngStream(2).child("x").generator().normal(size=10)
    assert not np.array_equal(a, b)


def test_nested_children_differ_from_parent():
    s = RngStream(5)
    c1 = s.child("a")
    c2 = c1.child("a")
    assert c1 != c2
    a = c1.generator().normal(size=10)
    b = c2.generator().normal(size=10)
    assert not np.array_equal(a, b)
