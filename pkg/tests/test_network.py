import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffsortkit.network import Comparator, Direction, NetworkKind, bitonic_depth, build, hard_sort, ranks_of


@pytest.mark.parametrize("n", [1, 2, 3, 4, 7, 10])
def test_odd_even_layer_count(n):
    assert build("odd_even", n).depth == n


@pytest.mark.parametrize("n,depth", [(2, 1), (4, 3), (16, 10), (32, 15), (1024, 55)])
def test_bitonic_layer_count(n, depth):
    assert build("bitonic", n).depth == depth
    assert bitonic_depth(n) == depth


@pytest.mark.parametrize("n", [3, 5, 6, 12])
def test_bitonic_rejects_non_power_of_two(n):
    with pytest.raises(ValueError, match="unsupported size"):
        build("bitonic", n)


def test_rejects_empty_network():
    with pytest.raises(ValueError):
        build("odd_even", 0)


@pytest.mark.parametrize("kind,n", [("odd_even", 9), ("bitonic", 16), ("bitonic", 64)])
def test_layers_are_disjoint(kind, n):
    net = build(kind, n)
    for layer in net.layers:
        wires = [w for c in layer for w in (c.lo, c.hi)]
        assert len(wires) == len(set(wires))
        assert all(c.lo < c.hi < n for c in layer)


def test_comparator_orientation():
    c = Comparator(1, 4, Direction.DESCENDING)
    assert (c.min_wire, c.max_wire) == (4, 1)
    assert Comparator(1, 4).min_wire == 1


@pytest.mark.parametrize("kind", list(NetworkKind))
@pytest.mark.parametrize("n", range(1, 13))
def test_zero_one_principle(kind, n):
    if kind is NetworkKind.BITONIC and n & (n - 1):
        pytest.skip("bitonic needs a power of two")
    bits = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
    out, _ = hard_sort(build(kind, n), bits)
    np.testing.assert_array_equal(out, np.sort(bits, axis=-1))


def test_examples():
    out, ranks = hard_sort(build("odd_even", 3), [3.0, 1.0, 2.0])
    np.testing.assert_array_equal(out, [1, 2, 3])
    np.testing.assert_array_equal(ranks, [2, 0, 1])
    x = np.arange(6.0)
    np.testing.assert_array_equal(hard_sort(build("odd_even", 6), x)[0], x)


def test_length_mismatch():
    with pytest.raises(ValueError):
        hard_sort(build("odd_even", 4), np.zeros(5))


def test_odd_even_is_stable_on_ties():
    x = np.array([2.0, 1.0, 2.0, 1.0, 2.0])
    _, ranks = hard_sort(build("odd_even", 5), x)
    np.testing.assert_array_equal(ranks, ranks_of(x))


def test_dump_format():
    text = build("bitonic", 4).dump()
    blocks = text.split("\n\n")
    assert len(blocks) == 3
    assert blocks[0].splitlines() == ["0,1,asc", "2,3,desc"]


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(["odd_even", "bitonic"]), k=st.integers(1, 5), data=st.data())
def test_random_vectors_sorted_and_ranks_consistent(kind, k, data):
    n = 2**k if kind == "bitonic" else data.draw(st.integers(1, 33))
    x = data.draw(arrays(np.float64, n, elements=st.floats(-1e6, 1e6, allow_nan=False)))
    out, ranks = hard_sort(build(kind, n), x)
    np.testing.assert_array_equal(out, np.sort(x))
    np.testing.assert_array_equal(np.sort(ranks), np.arange(n))
    np.testing.assert_array_equal(out[ranks], x)
