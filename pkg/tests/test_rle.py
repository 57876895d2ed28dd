"""Round-trip and error behaviour of the mask run-length codec."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from m2n2.errors import ValidationError
from m2n2.rle import decode_mask, encode_mask


def test_known_encodings():
    assert encode_mask(np.zeros((2, 3), bool))["counts"] == [6]
    assert encode_mask(np.ones((2, 3), bool))["counts"] == [0, 6]
    m = np.array([[0, 1, 1], [0, 0, 1]], bool)
    assert encode_mask(m) == {"h": 2, "w": 3, "counts": [1, 2, 2, 1]}


def test_counts_start_with_background_run():
    # first count is the leading background run, zero when pixel 0 is set
    m = np.zeros((1, 4), bool)
    m[0, 0] = True
    assert encode_mask(m)["counts"][0] == 0


def test_row_major_order():
    m = np.zeros((2, 2), bool)
    m[1, 0] = True  # flat index 2
    assert encode_mask(m)["counts"] == [2, 1, 1]


def test_decode_known():
    out = decode_mask({"h": 2, "w": 3, "counts": [1, 2, 2, 1]})
    assert np.array_equal(out, np.array([[0, 1, 1], [0, 0, 1]], bool))


@pytest.mark.parametrize("payload", [
    {"h": 2, "w": 2},                                   # missing counts
    {"h": 2, "w": 2, "counts": [3]},                    # wrong total
    {"h": 2, "w": 2, "counts": [2, -1, 3]},             # negative run
    {"h": 2, "w": 2, "counts": [2.0, 2.0]},             # non-integer runs
    {"h": 0, "w": 4, "counts": []},                     # empty mask
])
def test_decode_rejects_malformed(payload):
    with pytest.raises(ValidationError):
        decode_mask(payload)


def test_encode_rejects_bad_shapes():
    with pytest.raises(ValidationError):
        encode_mask(np.zeros((3,), bool))
    with pytest.raises(ValidationError):
        encode_mask(np.zeros((0, 4), bool))


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(bool, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=24)))
def test_round_trip(mask):
    payload = encode_mask(mask)
    assert np.array_equal(decode_mask(payload), mask)
    # canonical form: no zero-length runs after the first count
    assert all(c > 0 for c in payload["counts"][1:])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.randoms(use_true_random=False))
def test_json_compatible(h, w, rnd):
    import json

    mask = np.array([[rnd.random() < 0.5 for _ in range(w)] for _ in range(h)])
    payload = encode_mask(mask)
    again = json.loads(json.dumps(payload))
    assert np.array_equal(decode_mask(again), mask)
