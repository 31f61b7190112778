import numpy as np
import pytest

from phaseagg import turns


def test_reduce_wraps_into_range():
    assert turns.reduce(0) == 0
    assert turns.reduce(turns.MODULUS) == 0
    assert turns.reduce(turns.MODULUS + 5) == 5
    assert turns.reduce(-1) == turns.MODULUS - 1


def test_add_sub_are_exact_group_ops():
    a, b = 2**31 + 123, 2**31 + 456
    assert turns.add(a, b) == (a + b) % turns.MODULUS
    assert turns.sub(a, b) == (a - b) % turns.MODULUS
    assert turns.sub(b, a) == (b - a) % turns.MODULUS
    assert turns.add(turns.MODULUS - 1, 1) == 0


def test_sub_then_add_roundtrips():
    gen = np.random.default_rng(0)
    for _ in range(200):
        a = int(gen.integers(0, turns.MODULUS))
        b = int(gen.integers(0, turns.MODULUS))
        assert turns.add(turns.sub(a, b), b) == a


def test_negate():
    assert turns.negate(0) == 0
    assert turns.negate(5) == turns.MODULUS - 5
    assert turns.add(12345, turns.negate(12345)) == 0


def test_vector_ops_match_scalar():
    gen = np.random.default_rng(1)
    a = gen.integers(0, turns.MODULUS, size=50, dtype=np.uint64)
    b = gen.integers(0, turns.MODULUS, size=50, dtype=np.uint64)
    added = turns.add(a, b)
    subbed = turns.sub(a, b)
    for i in range(50):
        assert int(added[i]) == turns.add(int(a[i]), int(b[i]))
        assert int(subbed[i]) == turns.sub(int(a[i]), int(b[i]))


def test_total_matches_python_sum():
    gen = np.random.default_rng(2)
    values = [int(v) for v in gen.integers(0, turns.MODULUS, size=100)]
    assert turns.total(values) == sum(values) % turns.MODULUS


def test_vector_total():
    vecs = [np.array([turns.MODULUS - 1, 1], dtype=np.uint64),
            np.array([2, turns.MODULUS - 1], dtype=np.uint64)]
    out = turns.vector_total(vecs)
    assert list(out) == [1, 0]


def test_radians_roundtrip_on_grid():
    for v in [0, 1, 2**30, 2**31, turns.MODULUS - 1]:
        assert turns.from_radians(turns.to_radians(v)) == v


def test_quarter_turn_is_half_pi():
    assert turns.to_radians(2**30) == pytest.approx(np.pi / 2)


def test_is_on_grid():
    step = turns.MODULUS // 4
    assert turns.is_on_grid(0, step)
    assert turns.is_on_grid(3 * step, step)
    assert not turns.is_on_grid(step + 1, step)
    arr = np.array([0, step, 2 * step], dtype=np.uint64)
    assert turns.is_on_grid(arr, step)
    assert not turns.is_on_grid(arr + np.uint64(1), step)


def test_as_vector_rejects_floats():
    with pytest.raises(TypeError):
        turns.as_vector(np.array([0.5, 1.0]))
