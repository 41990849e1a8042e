import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gqkd.model import ReceiverModel
from gqkd.protocol import (
    B92State,
    SiftRecord,
    click_probabilities,
    conclusive_probability,
    sift,
)


def projector_oracle(angle_deg):
    """Enumerate Alice's two states and Bob's two analyzers with explicit projectors."""
    th = math.radians(angle_deg)
    states = [np.array([1.0, 0.0]), np.array([math.cos(th), math.sin(th)])]
    perp = [np.array([0.0, 1.0]), np.array([-math.sin(th), math.cos(th)])]
    total = 0.0
    for bit, analyzer in itertools.product((0, 1), (0, 1)):
        # analyzer k clicks conclusively only when the state is not k
        p = abs(perp[analyzer] @ states[bit]) ** 2
        total += 0.5 * 0.5 * p  # P(bit) * P(route)
    return total


@pytest.mark.parametrize("angle, expected", [(0, 0.0), (90, 0.5), (45, 0.25)])
def test_conclusive_points(angle, expected):
    assert conclusive_probability(angle) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0.5, 89.5))
def test_conclusive_matches_projectors(angle):
    assert conclusive_probability(angle) == pytest.approx(projector_oracle(angle), rel=1e-12)


@given(a=st.floats(0.1, 89.9), b=st.floats(0.1, 89.9))
def test_conclusive_increasing(a, b):
    if a < b:
        assert conclusive_probability(a) < conclusive_probability(b)


def test_click_probabilities_zero_arrival():
    cp = click_probabilities(B92State.encode(0, 45), ReceiverModel(), 0.0, 0.5)
    assert cp.total == 0.0


def test_click_probabilities_ideal_analyzer():
    for bit in (0, 1):
        cp = click_probabilities(B92State.encode(bit, 45), ReceiverModel(extinction=math.inf), 1, 1)
        assert cp.p_error0 == cp.p_error1 == 0.0


def test_click_probabilities_21db():
    rx = ReceiverModel(extinction=21.0)
    cp = click_probabilities(B92State.encode(0, 45), rx, 1.0, 1.0)
    assert cp.p_click1 == pytest.approx(0.25)
    assert cp.p_error0 == pytest.approx(0.25 * 10 ** -2.1, rel=1e-12)
    assert cp.p_error0 == pytest.approx(1.985e-3, rel=1e-3)
    assert cp.p_click0 == cp.p_error1 == 0.0
    cp1 = click_probabilities(B92State.encode(1, 45), rx, 1.0, 1.0)
    assert (cp1.p_click0, cp1.p_error1) == (cp.p_click1, cp.p_error0)


@given(arr=st.floats(0, 1), eff=st.floats(0, 1), ext=st.floats(0, 60), bit=st.sampled_from([0, 1]))
def test_click_probabilities_bounded(arr, eff, ext, bit):
    cp = click_probabilities(B92State.encode(bit, 45), ReceiverModel(extinction=ext), arr, eff)
    assert 0 <= cp.total <= 1


def test_sift_examples():
    assert (sift([]).key_bits, sift([]).error_bits) == (0, 0)
    ten = [SiftRecord(b % 2, 1 - b % 2) for b in range(10)]
    assert (sift(ten).key_bits, sift(ten).error_bits) == (10, 0)
    mix = [SiftRecord(0, 1), SiftRecord(1, 0), SiftRecord(1, 0),  # correct
           SiftRecord(0, 0),                                      # wrong detector
           SiftRecord(0, None), SiftRecord(1, None)]              # inconclusive
    res = sift(mix)
    assert (res.key_bits, res.error_bits) == (4, 1)
    assert res.qber == 0.25


@given(st.lists(st.tuples(st.sampled_from([0, 1]), st.sampled_from([0, 1, None]))))
def test_sift_invariants(pairs):
    recs = [SiftRecord(a, d) for a, d in pairs]
    res = sift(recs)
    assert 0 <= res.error_bits <= res.key_bits
    assert 0 <= res.qber <= 1
    assert all(r.conclusive for r in recs if r.error)
