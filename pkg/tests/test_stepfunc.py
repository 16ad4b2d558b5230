from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haarfact import (ROOT, UNIT, DyadicInterval, HaarCoefficients, SpanError, StepFunction,
                      haar_analyze, haar_function, haar_synthesize)
from haarfact.dyadic import intervals_up_to
from haarfact.stepfunc import distribution, pairing, rademacher, support_measure

from oracles import haar_value, midpoints


def values(f):
    return f.values.tolist()


def test_haar_function_values():
    assert values(haar_function(UNIT, 1)) == [1, -1]
    assert values(haar_function(DyadicInterval(1, 0), 2)) == [1, -1, 0, 0]
    assert values(rademacher(1, 2)) == [1, -1, 1, -1]


def test_haar_function_matches_definition():
    for interval in intervals_up_to(3):
        expected = [haar_value(interval.level, interval.position, t) for t in midpoints(4)]
        assert values(haar_function(interval, 4)) == expected


def test_analyze_examples():
    assert haar_analyze(haar_function(UNIT, 1)).nonzero() == {UNIT: 1}
    quarter = StepFunction.indicator(DyadicInterval(2, 0), 2)
    assert haar_analyze(quarter).nonzero() == {ROOT: F(1, 4), UNIT: F(1, 4),
                                               DyadicInterval(1, 0): F(1, 2)}
    with pytest.raises(SpanError):
        haar_analyze(StepFunction.constant(1, 0), include_root=False)


def test_synthesize_examples():
    c = HaarCoefficients({UNIT: 1, DyadicInterval(1, 0): 2})
    assert values(haar_synthesize(c, 2)) == [3, -1, -1, -1]
    assert values(haar_synthesize(HaarCoefficients({}), 2)) == [0, 0, 0, 0]


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=3), st.data())
def test_analyze_synthesize_round_trip(depth, data):
    intervals = intervals_up_to(depth)
    numerators = data.draw(st.lists(st.integers(-9, 9), min_size=len(intervals),
                                    max_size=len(intervals)))
    c = HaarCoefficients({k: F(v, 7) for k, v in zip(intervals, numerators)}, depth)
    back = haar_analyze(haar_synthesize(c, depth + 1), include_root=False)
    assert back == c


def test_pairings():
    assert pairing(haar_function(DyadicInterval(1, 0), 2), haar_function(DyadicInterval(1, 0), 2)) \
        == F(1, 2)
    assert pairing(haar_function(UNIT, 2), haar_function(DyadicInterval(1, 0), 2)) == 0
    assert pairing(StepFunction.constant(1), StepFunction.constant(1)) == 1


def test_distribution_and_support():
    assert distribution(haar_function(UNIT, 1)) == [(-1, F(1, 2)), (1, F(1, 2))]
    assert distribution(haar_function(DyadicInterval(1, 0), 2)) == [(-1, F(1, 4)), (0, F(1, 2)),
                                                                     (1, F(1, 4))]
    assert support_measure(haar_function(DyadicInterval(1, 0), 2)) == F(1, 2)


def test_float_mode_round_trip():
    rng = np.random.default_rng(0)
    f = StepFunction(rng.standard_normal(16), "float")
    back = haar_synthesize(haar_analyze(f), 4)
    assert np.allclose(back.values, f.values, atol=1e-12)
