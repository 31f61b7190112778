import numpy as np
import pytest
import scipy.stats

from phaseagg import rng, turns
from phaseagg.channel import (
    channel_from_phases,
    get_phase,
    pair_phase_stream,
    sample_round_channel,
)
from phaseagg.errors import InvalidTopologyError, NoSelfChannelError


def test_two_clients_single_mirrored_value():
    chan = sample_round_channel(2, iteration=0, seed=7)
    assert chan.phases[0, 1] == chan.phases[1, 0]
    # the one off-diagonal value comes straight from the keyed generator
    expected = rng.keyed_turn(7, rng.CHANNEL_DOMAIN, 0, 0, 1)
    assert get_phase(chan, 0, 1) == expected
    assert get_phase(chan, 1, 0) == expected


def test_four_clients_six_independent_draws():
    chan = sample_round_channel(4, iteration=3, seed=9)
    seen = {}
    for i in range(4):
        for j in range(i + 1, 4):
            seen[(i, j)] = get_phase(chan, i, j)
            assert seen[(i, j)] == rng.keyed_turn(9, rng.CHANNEL_DOMAIN, 3, i, j)
    assert len(seen) == 6


def test_reciprocity_exact():
    chan = sample_round_channel(8, iteration=0, seed=42)
    for i in range(8):
        for j in range(8):
            if i != j:
                assert get_phase(chan, i, j) == get_phase(chan, j, i)


def test_matrices_differ_across_iterations():
    a = sample_round_channel(8, iteration=0, seed=42)
    b = sample_round_channel(8, iteration=1, seed=42)
    assert not np.array_equal(a.phases, b.phases)


def test_determinism_bit_identical():
    a = sample_round_channel(6, iteration=5, seed=13)
    b = sample_round_channel(6, iteration=5, seed=13)
    assert np.array_equal(a.phases, b.phases)


def test_too_few_clients():
    with pytest.raises(InvalidTopologyError):
        sample_round_channel(1, iteration=0, seed=0)


def test_no_self_channel():
    chan = sample_round_channel(3, iteration=0, seed=0)
    with pytest.raises(NoSelfChannelError):
        get_phase(chan, 0, 0)


def test_out_of_range_ids():
    chan = sample_round_channel(3, iteration=0, seed=0)
    with pytest.raises(IndexError):
        get_phase(chan, 0, 3)
    with pytest.raises(IndexError):
        get_phase(chan, -1, 1)


def test_matrix_is_immutable():
    chan = sample_round_channel(3, iteration=0, seed=0)
    with pytest.raises(ValueError):
        chan.phases[0, 1] = 0


def test_entry_uniformity_chi_square():
    # 10^4 resampled matrices; fixed entry binned into 16 equal arcs.
    samples = np.array(
        [get_phase(sample_round_channel(4, iteration=t, seed=77), 0, 1)
         for t in range(10_000)],
        dtype=np.uint64,
    )
    counts = np.bincount(((samples * np.uint64(16)) >> np.uint64(32)).astype(int),
                         minlength=16)
    _, p = scipy.stats.chisquare(counts)
    assert p >= 0.01


@pytest.mark.parametrize("pair_a,pair_b", [((0, 1), (2, 3)), ((0, 1), (0, 2))])
def test_entry_independence_proxy(pair_a, pair_b):
    a = np.empty(10_000)
    b = np.empty(10_000)
    for t in range(10_000):
        chan = sample_round_channel(4, iteration=t, seed=123)
        a[t] = get_phase(chan, *pair_a)
        b[t] = get_phase(chan, *pair_b)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.05


def test_explicit_phase_matrix():
    table = [[0, 5, 7], [5, 0, 9], [7, 9, 0]]
    chan = channel_from_phases(table, iteration=2)
    assert get_phase(chan, 1, 2) == 9
    with pytest.raises(InvalidTopologyError):
        channel_from_phases([[0, 1], [2, 0]])


def test_pair_stream_symmetric_and_deterministic():
    chan = sample_round_channel(4, iteration=1, seed=3)
    s_ij = pair_phase_stream(chan, 1, 3, 16)
    s_ji = pair_phase_stream(chan, 3, 1, 16)
    assert np.array_equal(s_ij, s_ji)
    assert np.array_equal(s_ij, pair_phase_stream(chan, 1, 3, 16))
    assert np.all(s_ij < turns.MODULUS)


def test_pair_stream_requires_seeded_channel():
    chan = channel_from_phases([[0, 1], [1, 0]])
    with pytest.raises(InvalidTopologyError):
        pair_phase_stream(chan, 0, 1, 4)
