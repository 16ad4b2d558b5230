from collections import Counter
from fractions import Fraction as F

import numpy as np
import pytest

from haarfact import (UNIT, DyadicInterval, HaarCoefficients, IndexUniverse, OmegaCoefficients,
                      OmegaIndex, OmegaOperator, build_omega_basis, compress_component,
                      conditional_expectation, embed_component, hardy_norm, lift_system,
                      omega_norm, randomize_faithful)
from haarfact.dyadic import intervals_up_to
from haarfact.omega import (OmegaBasis, component_condexp_sum, partition_from_functions,
                            standard_system)
from haarfact.stepfunc import (StepFunction, distribution, haar_function, haar_synthesize,
                               pairing, rademacher)

import oracles


def random_rational(rng, size, density=1.0):
    return [F(int(rng.integers(-6, 7)), int(rng.integers(1, 5))) if rng.random() < density else F(0)
            for _ in range(size)]


def joint_law(basis: OmegaBasis) -> Counter:
    """Law of the vector of all basis functions, as weighted value tuples."""
    rows = np.stack([basis.function(i, "float").values for i in basis.universe], axis=1)
    weight = F(1, basis.points)
    law = Counter()
    for row in rows:
        law[tuple(row.tolist())] += weight
    return law


def test_packed_frequencies():
    basis = build_omega_basis(2)
    assert basis.tau == ((0,), (1, 2), (3, 4, 5))
    assert basis.function(OmegaIndex(1, UNIT)) == rademacher(1, basis.resolution)


def test_components_are_pairwise_independent():
    basis = build_omega_basis(2)
    a = basis.function(OmegaIndex(0, UNIT)).values
    b = basis.function(OmegaIndex(1, UNIT)).values
    assert F(int(np.count_nonzero((a == 1) & (b == 1))), basis.points) == F(1, 4)


def test_joint_law_does_not_depend_on_frequencies():
    packed = build_omega_basis(2)
    permuted = OmegaBasis(2, ((5,), (0, 3), (1, 2, 4)))
    assert joint_law(packed) == joint_law(permuted)


def test_embedding_example():
    x = HaarCoefficients({UNIT: 1})
    assert embed_component(x, 1) == OmegaCoefficients.basis_vector(OmegaIndex(1, UNIT), 1)


def test_embedding_preserves_pairings():
    rng = np.random.default_rng(1)
    basis = build_omega_basis(2)
    intervals = intervals_up_to(2)
    for _ in range(5):
        x = HaarCoefficients(dict(zip(intervals, random_rational(rng, 7))), 2)
        y = HaarCoefficients(dict(zip(intervals, random_rational(rng, 7))), 2)
        plain = pairing(haar_synthesize(x, 3), haar_synthesize(y, 3))
        lifted = pairing(basis.synthesize(embed_component(x, 2)),
                         basis.synthesize(embed_component(y, 2)))
        assert plain == lifted


@pytest.mark.parametrize("space", ["lp:1:independent", "lp:2:constant", "lp:4:independent",
                                   "linf:constant"])
def test_embedding_is_isometric(space):
    rng = np.random.default_rng(2)
    intervals = intervals_up_to(3)
    for _ in range(5):
        x = HaarCoefficients(dict(zip(intervals, rng.standard_normal(15).tolist())), 3,
                             mode="float")
        assert omega_norm(embed_component(x, 3), spec=space).value == pytest.approx(
            hardy_norm(x, space).value, rel=1e-9)


def test_compression_examples():
    assert compress_component(OmegaOperator.identity(2), 2).matrix.tolist() == \
        np.eye(7, dtype=int).tolist()
    entries = [F(k, 13) for k in range(11)]
    block = compress_component(OmegaOperator.diagonal(entries, 2), 2)
    assert block.diagonal_values().tolist() == entries[4:]


def test_compression_preserves_matrix_elements():
    rng = np.random.default_rng(3)
    matrix = np.array(random_rational(rng, 121), dtype=object).reshape(11, 11)
    T = OmegaOperator(matrix, 2)
    T2 = compress_component(T, 2)
    basis = build_omega_basis(2)
    for I in intervals_up_to(2):
        for J in intervals_up_to(2):
            column = HaarCoefficients({K: T2.coefficient(K, J) for K in intervals_up_to(2)}, 2)
            left = pairing(haar_function(I, 3), haar_synthesize(column, 3))
            image = T.apply(OmegaCoefficients.basis_vector(OmegaIndex(2, J), 2))
            right = pairing(basis.function(OmegaIndex(2, I)), basis.synthesize(image))
            assert left == right


def test_conditional_expectation_examples():
    halves = [[DyadicInterval(1, 0)], [DyadicInterval(1, 1)]]
    assert conditional_expectation(haar_function(UNIT, 3), halves) == haar_function(UNIT, 3)
    assert conditional_expectation(haar_function(DyadicInterval(1, 0), 3), halves) == \
        StepFunction.zeros(3)


@pytest.mark.parametrize("space", ["lp:1", "lp:2", "lp:4"])
def test_jensen_contraction(space):
    from haarfact.norms import base_norm

    rng = np.random.default_rng(4)
    for _ in range(100):
        f = StepFunction(rng.standard_normal(32), "float")
        labels = rng.integers(0, int(rng.integers(1, 9)), size=32)
        g = conditional_expectation(f, labels)
        assert np.allclose(g.values, oracles.conditional_average(f.values.tolist(), labels.tolist()))
        assert base_norm(g, space).value <= base_norm(f, space).value * (1 + 1e-12)


def test_conditional_expectation_of_block_pieces():
    system = randomize_faithful(1, 1, seed=3)
    lifted = lift_system([standard_system(0), system], (0, 2), 2)
    basis = build_omega_basis(2)
    generators = [basis.synthesize(lifted.lifted(OmegaIndex(1, I))) for I in intervals_up_to(1)]
    algebra = partition_from_functions(generators)
    for I in intervals_up_to(1):
        b = basis.synthesize(lifted.lifted(OmegaIndex(1, I)))
        for K, theta in system.blocks[I]:
            piece = basis.function(OmegaIndex(2, K))
            expected = b * (theta * K.measure / I.measure)
            assert conditional_expectation(piece, algebra) == expected


def random_component_algebra(basis, n, rng):
    atoms = basis.atom_labels(n)
    groups = rng.integers(0, int(rng.integers(1, 2 ** (n + 1) + 1)), size=int(atoms.max()) + 1)
    return groups[atoms]


def test_join_identity_against_separate_averages():
    rng = np.random.default_rng(6)
    basis = build_omega_basis(2)
    for _ in range(20):
        x = OmegaCoefficients(random_rational(rng, 11, 0.8), 2)
        algebras = [random_component_algebra(basis, n, rng) for n in range(3)]
        result = component_condexp_sum(x, algebras, basis)
        f = basis.synthesize(x).values.tolist()
        separate = [oracles.conditional_average(f, a.tolist()) for a in algebras]
        assert result.values.tolist() == [sum(v) for v in zip(*separate)]


def test_join_of_full_components_projects():
    rng = np.random.default_rng(7)
    basis = build_omega_basis(2)
    x = OmegaCoefficients(random_rational(rng, 11), 2)
    kept = OmegaCoefficients(list(x.values[:4]) + [F(0)] * 7, 2)
    result = component_condexp_sum(x, [basis.atom_labels(0), basis.atom_labels(1)], basis)
    assert result == basis.synthesize(kept)


def test_deep_components_vanish():
    basis = build_omega_basis(2)
    x = OmegaCoefficients.basis_vector(OmegaIndex(2, DyadicInterval(1, 1)), 2)
    result = component_condexp_sum(x, [basis.atom_labels(0), basis.atom_labels(1)], basis)
    assert result == StepFunction.zeros(basis.resolution)


def test_trivial_lift_is_the_basis():
    lifted = lift_system([standard_system(n) for n in range(3)], (0, 1, 2), 2)
    for index in IndexUniverse(2):
        assert lifted.lifted(index) == OmegaCoefficients.basis_vector(index, 2)


def test_lift_places_blocks_in_components():
    lifted = lift_system([standard_system(0), standard_system(1)], (1, 2), 2)
    assert lifted.block(OmegaIndex(0, UNIT)) == {OmegaIndex(1, UNIT): 1}


def test_lift_preserves_laws():
    rng = np.random.default_rng(9)
    systems = [randomize_faithful(n, 1, seed=n) for n in range(3)]
    lifted = lift_system(systems, (1, 2, 3), 3)
    ambient, target = build_omega_basis(3), build_omega_basis(2)
    for _ in range(3):
        a = OmegaCoefficients(random_rational(rng, 11), 2)
        image = sum((lifted.lifted(i) * a[i] for i in IndexUniverse(2)),
                    OmegaCoefficients.zeros(3))
        assert distribution(ambient.synthesize(image)) == distribution(target.synthesize(a))
