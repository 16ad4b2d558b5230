import math

import numpy as np
import pytest

from haarfact import (UNIT, DyadicInterval, ExpectationStrategy, HaarCoefficients, HaarOperator,
                      OmegaCoefficients, OmegaIndex, OmegaOperator, SpaceSpec,
                      UnsupportedSpaceError, certified_column_bound, hardy_norm, omega_norm,
                      operator_norm_lower)
from haarfact.dyadic import IndexUniverse, intervals_up_to
from haarfact.norms import base_norm
from haarfact.stepfunc import StepFunction, haar_function

import oracles

SPACES = ["lp:1:constant", "lp:2:constant", "lp:4:constant", "linf:constant",
          "lp:1:independent", "lp:2:independent", "lp:4:independent", "linf:independent"]


def test_space_parsing():
    assert SpaceSpec.parse("lp:2:independent") == SpaceSpec("lp", 2.0, "independent")
    assert str(SpaceSpec.parse("linf")) == "linf:constant"
    with pytest.raises(UnsupportedSpaceError):
        SpaceSpec.parse("lp:0.5")
    with pytest.raises(UnsupportedSpaceError):
        SpaceSpec.parse("orlicz:2")


def test_base_norm_examples():
    one = StepFunction.constant(1, 3)
    for space in SPACES:
        assert base_norm(one, space).value == pytest.approx(1.0, abs=1e-12)
    h = haar_function(DyadicInterval(1, 0), 2)
    assert base_norm(h, "lp:2").value == pytest.approx(2 ** -0.5, abs=1e-12)


def test_base_norm_sandwich():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = StepFunction(rng.standard_normal(32), "float")
        l1, l2, linf = (base_norm(f, s).value for s in ("lp:1", "lp:2", "linf"))
        assert l1 <= l2 + 1e-12 <= linf + 2e-12


def test_hardy_norm_examples():
    c = HaarCoefficients({UNIT: 1, DyadicInterval(1, 0): 2})
    assert hardy_norm(c, "lp:2:independent").value == pytest.approx(math.sqrt(2.5), abs=1e-12)
    assert hardy_norm(c, "lp:2:constant").value == pytest.approx(math.sqrt(3), abs=1e-12)


@pytest.mark.parametrize("space", SPACES)
def test_single_haar_function(space):
    h = DyadicInterval(2, 1)
    c = HaarCoefficients({h: 1})
    assert hardy_norm(c, space).value == pytest.approx(base_norm(haar_function(h, 3), space).value,
                                                       abs=1e-12)


@pytest.mark.parametrize("space", SPACES)
def test_hardy_norm_against_enumeration(space):
    rng = np.random.default_rng(11)
    for depth in (0, 1, 2, 3):
        intervals = intervals_up_to(depth)
        values = rng.standard_normal(len(intervals))
        c = HaarCoefficients(dict(zip(intervals, values.tolist())), depth, mode="float")
        expected = oracles.hardy_norm({(k.level, k.position): v for k, v in c.items()}, space)
        assert hardy_norm(c, space).value == pytest.approx(expected, rel=1e-10)


def test_monte_carlo_within_four_sigma():
    rng = np.random.default_rng(5)
    intervals = intervals_up_to(5)
    c = HaarCoefficients(dict(zip(intervals, rng.standard_normal(len(intervals)).tolist())), 5,
                         mode="float")
    exact = hardy_norm(c, "lp:1:independent")
    sampled = hardy_norm(c, "lp:1:independent", ExpectationStrategy(exact_cutoff=0,
                                                                    mc_samples=4000, seed=2))
    assert sampled.method == "montecarlo"
    assert abs(sampled.value - exact.value) <= 4 * sampled.stat_error


def test_omega_norm_examples():
    x = OmegaCoefficients.basis_vector(OmegaIndex(0, UNIT), 1)
    for space in SPACES:
        assert omega_norm(x, spec=space).value == pytest.approx(1.0, abs=1e-12)
    y = x + OmegaCoefficients.basis_vector(OmegaIndex(1, UNIT), 1)
    assert omega_norm(y, spec="lp:1:independent").value == pytest.approx(1.0, abs=1e-12)
    assert omega_norm(y, spec="lp:2:constant").value == pytest.approx(math.sqrt(2), abs=1e-12)


@pytest.mark.parametrize("space", SPACES)
def test_omega_norm_against_product_space(space):
    rng = np.random.default_rng(17)
    universe = IndexUniverse(2)
    for _ in range(3):
        values = rng.standard_normal(len(universe)) * (rng.random(len(universe)) < 0.7)
        x = OmegaCoefficients(values, 2, "float")
        coefficients = {(i.component, i.interval.level, i.interval.position): v
                        for i, v in zip(universe, values) if v != 0}
        expected = oracles.product_space_norm(coefficients, 2, space)
        assert omega_norm(x, spec=space).value == pytest.approx(expected, rel=1e-10)


def test_operator_norm_estimates():
    identity = OmegaOperator.identity(2, "float")
    assert operator_norm_lower(identity, "lp:1:independent", trials=4) == pytest.approx(1, abs=1e-9)
    assert operator_norm_lower(identity * 2.0, "lp:2:constant", trials=4) == pytest.approx(2, abs=1e-9)
    half = OmegaOperator.diagonal([1.0] + [0.5] * 10, 2)
    assert operator_norm_lower(half, "lp:1:independent", trials=4) >= 1 - 1e-9


def test_certified_bound_examples():
    assert certified_column_bound(OmegaOperator.zeros(2, mode="float"), "lp:1") == 0
    matrix = np.zeros((4, 4))
    matrix[0, 0] = 1.0
    assert certified_column_bound(OmegaOperator(matrix, 1), "lp:1:independent") == pytest.approx(2)


def test_certified_bound_dominates_estimate():
    rng = np.random.default_rng(8)
    for space in ("lp:1:independent", "lp:2:constant", "linf:independent"):
        T = OmegaOperator(rng.standard_normal((11, 11)) * 0.1, 2)
        assert operator_norm_lower(T, space, trials=6) <= certified_column_bound(T, space) + 1e-12


def test_triangle_method_matches_embedding():
    rng = np.random.default_rng(4)
    block = HaarOperator(rng.standard_normal((7, 7)), 2)
    direct = certified_column_bound(block, "lp:2:independent", method="triangle")
    universe = IndexUniverse(2)
    matrix = np.zeros((11, 11))
    matrix[universe.component_slice(2), universe.component_slice(2)] = block.matrix
    embedded = certified_column_bound(OmegaOperator(matrix, 2), "lp:2:independent",
                                      method="triangle")
    assert direct == pytest.approx(embedded, rel=1e-12)


def test_l2_closed_form_matches_grid_evaluation():
    from haarfact.norms import column_norms

    rng = np.random.default_rng(12)
    T = OmegaOperator(rng.standard_normal((11, 11)), 2)
    closed = column_norms(T, "lp:2:constant")
    universe = IndexUniverse(2)
    for j, index in enumerate(universe):
        image = T.apply(OmegaCoefficients.basis_vector(index, 2, "float"))
        expected = omega_norm(image, spec="lp:2:constant").value / float(index.interval.measure) ** 0.5
        assert closed[j] == pytest.approx(expected, rel=1e-12)
