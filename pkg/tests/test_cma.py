import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cmasim.cma import Cma, Mode, ModeError, bits_from_lanes, lanes_from_bits
from cmasim.oracle import exact_hamming_radius

R, W = 256, 256


def fresh():
    return Cma(R, W)


def test_write_zero_row_cost():
    c = fresh()
    c.write_row(0, np.zeros(W, np.uint8))
    assert not c.read_row(0).any()
    ops = c.drain()
    assert ops[0] == ("cma_write", c.cost.cma_write)
    assert (ops[0][1].energy_pj, ops[0][1].latency_ns) == (49.1, 10.0)


def test_write_out_of_range():
    with pytest.raises(IndexError):
        fresh().write_row(R, np.zeros(W, np.uint8))


def test_read_pattern_a5():
    c = fresh()
    bits = np.unpackbits(np.full(W // 8, 0xA5, np.uint8))
    c.write_row(3, bits)
    assert np.array_equal(c.read_row(3), bits)


def test_read_in_cam_mode_fails():
    c = fresh()
    c.set_mode(Mode.CAM)
    with pytest.raises(ModeError):
        c.read_row(0)


def test_oversized_write_rejected():
    with pytest.raises(ValueError):
        fresh().write_row(0, np.zeros(W + 1, np.uint8))


def _lanes_row(values):
    return bits_from_lanes(values)


def test_in_array_add_example():
    c = fresh()
    c.write_row(0, _lanes_row(np.arange(1, 33)))
    c.write_row(1, _lanes_row(np.ones(32)))
    c.set_mode(Mode.GPCIM)
    c.drain()
    out = c.in_array_add([0, 1])
    assert out.tolist() == list(range(2, 34))
    assert [op for op, _ in c.drain()] == ["cma_add"]


def test_single_row_add_is_free():
    c = fresh()
    c.write_row(0, _lanes_row(np.arange(32) - 16))
    c.set_mode(Mode.GPCIM)
    c.drain()
    assert c.in_array_add([0]).tolist() == list(range(-16, 16))
    assert c.drain() == []


def test_wide_accumulator_no_wrap():
    c = fresh()
    c.write_row(0, _lanes_row(np.full(32, 127)))
    c.write_row(1, _lanes_row(np.full(32, 127)))
    c.set_mode(Mode.GPCIM)
    assert (c.in_array_add([0, 1]) == 254).all()


def test_search_zero_distance_and_full_radius():
    rng = np.random.default_rng(0)
    c = fresh()
    rows = rng.integers(0, 2, (10, W), dtype=np.uint8)
    for i, r in enumerate(rows):
        c.write_row(i, r)
    c.set_mode(Mode.CAM)
    assert 4 in c.threshold_search(rows[4], 0).matched_rows
    assert c.threshold_search(rows[4], W).matched_rows == tuple(range(10))


def test_search_matches_bruteforce_theta60():
    rng = np.random.default_rng(1)
    c = fresh()
    rows = rng.integers(0, 2, (100, W), dtype=np.uint8)
    for i, r in enumerate(rows):
        c.write_row(i, r)
    c.set_mode(Mode.CAM)
    # centre the query near a stored row so the radius is non-trivial
    q = rows[7].copy()
    q[rng.choice(W, 40, replace=False)] ^= 1
    got = set(c.threshold_search(q, 60).matched_rows)
    assert got == exact_hamming_radius(rows, q, 60) and 7 in got


def test_search_charges_once():
    c = fresh()
    c.set_mode(Mode.CAM)
    c.drain()
    c.threshold_search(np.zeros(W, np.uint8), 5)
    assert [op for op, _ in c.drain()] == ["cma_search"]


def test_dont_care_cells_never_mismatch():
    c = fresh()
    data = np.ones(W, np.uint8)
    care = np.zeros(W, np.uint8)
    care[:8] = 1
    c.store_ternary(0, data, care)
    c.set_mode(Mode.CAM)
    q = np.zeros(W, np.uint8)
    assert c.mismatches(q)[0] == 8


def test_mode_round_trip_keeps_contents():
    c = fresh()
    bits = np.random.default_rng(2).integers(0, 2, W, dtype=np.uint8)
    c.write_row(9, bits)
    c.set_mode(Mode.CAM)
    c.set_mode(Mode.RAM)
    assert np.array_equal(c.read_row(9), bits)


def test_search_sees_new_writes():
    c = fresh()
    q = np.ones(W, np.uint8)
    c.write_row(0, np.zeros(W, np.uint8))
    c.set_mode(Mode.CAM)
    assert c.threshold_search(q, 0).matched_rows == ()
    c.set_mode(Mode.RAM)
    c.write_row(1, q)
    c.set_mode(Mode.CAM)
    assert c.threshold_search(q, 0).matched_rows == (1,)


@given(arrays(np.int8, 32))
def test_lane_codec_round_trip(values):
    assert np.array_equal(lanes_from_bits(bits_from_lanes(values.astype(np.int64))), values)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 60), st.integers(0, W))
def test_search_property(seed, n, theta):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, 2, (n, W), dtype=np.uint8)
    c = fresh()
    for i, r in enumerate(rows):
        c.write_row(i, r)
    c.set_mode(Mode.CAM)
    q = rng.integers(0, 2, W, dtype=np.uint8)
    assert set(c.threshold_search(q, theta).matched_rows) == exact_hamming_radius(rows, q, theta)


@settings(max_examples=40, deadline=None)
@given(st.lists(arrays(np.int8, 32, elements=st.integers(-127, 127)), min_size=1, max_size=20))
def test_add_equals_wide_sum(rows):
    c = fresh()
    for i, r in enumerate(rows):
        c.write_row(i, bits_from_lanes(r.astype(np.int64)))
    c.set_mode(Mode.GPCIM)
    c.drain()
    out = c.in_array_add(range(len(rows)))
    assert np.array_equal(out, np.sum(np.asarray(rows, np.int64), axis=0))
    assert len(c.drain()) == len(rows) - 1
