"""Diagonal operators, multipliers and the factor operators of block systems.

Given a system of block functions ``b_I^n`` in the independent sum, the pair
``(A, B)`` built here satisfies ``A B = I`` on the target truncation, so any
operator ``T`` on the ambient truncation yields ``A T B`` on the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .dyadic import IndexUniverse, OmegaIndex, halves
from .exceptions import FaithfulSystemError, HypothesisError, ModeMismatchError
from .linalg import OmegaOperator, rational_identity, rational_zeros, to_float_array
from .omega import OmegaFaithfulSystem
from .stepfunc import as_fraction


@dataclass(frozen=True)
class DiagonalSpec:
    """Diagonal entries ``d_I^n = <h_I^n, T h_I^n> / |I|`` keyed by index."""

    entries: Mapping[OmegaIndex, object]

    def values(self) -> list:
        return list(self.entries.values())

    def as_set(self) -> set:
        return set(self.entries.values())

    def hull(self) -> tuple[object, object]:
        """Closure of the set of finite averages: ``[min d, max d]``."""
        values = self.values()
        return min(values), max(values)

    def contains_average(self, value) -> bool:
        low, high = self.hull()
        return low <= value <= high

    def is_delta_large(self, delta, positive: bool = False) -> bool:
        if positive:
            return all(v >= delta for v in self.values())
        return all(abs(v) >= delta for v in self.values())


def diagonal_of(T: OmegaOperator) -> DiagonalSpec:
    if not T.is_square:
        raise ValueError("diagonal entries need a square operator")
    return DiagonalSpec({index: T.matrix[i, i] for i, index in enumerate(T.domain.indices)})


def is_delta_large(T: OmegaOperator, delta, positive: bool = False) -> bool:
    return diagonal_of(T).is_delta_large(delta, positive)


def multiplier_zero_one(pattern: Mapping[OmegaIndex, int], n_max: int,
                        mode: str = "rational") -> OmegaOperator:
    """Diagonal 0-1 operator; indices missing from ``pattern`` get 1.

    Within each component a zero entry must force zeros on both halves.
    """
    universe = IndexUniverse(n_max)
    values = []
    for index in universe.indices:
        value = int(pattern.get(index, 1))
        if value not in (0, 1):
            raise ValueError(f"entry {value} at {index!r} is not 0 or 1")
        values.append(value)
    lookup = dict(zip(universe.indices, values))
    for index, value in lookup.items():
        if value == 0 and index.interval.level < index.component:
            for half in halves(index.interval):
                if lookup[OmegaIndex(index.component, half)] != 0:
                    raise ValueError(f"zero at {index!r} but not at its half {half!r}")
    return OmegaOperator.diagonal(values, n_max, mode)


def _factor_matrices(system: OmegaFaithfulSystem, normalizers, mode: str):
    ambient = IndexUniverse(system.n_max)
    target = system.target_universe
    shape = (len(ambient), len(target))
    if mode == "rational":
        b_matrix = rational_zeros(shape)
        a_matrix = rational_zeros(shape[::-1])
    else:
        b_matrix = np.zeros(shape)
        a_matrix = np.zeros(shape[::-1])
    for j, index in enumerate(target.indices):
        scale = normalizers(index)
        for k, theta in system.block(index).items():
            i = ambient.position(k)
            b_matrix[i, j] = theta
            weight = k.interval.measure / scale
            a_matrix[j, i] = theta * (weight if mode == "rational" else float(weight))
    a = OmegaOperator(a_matrix, ambient, target, mode)
    b = OmegaOperator(b_matrix, target, ambient, mode)
    return a, b


def build_AB_hat(system: OmegaFaithfulSystem, mode: str = "rational"
                 ) -> tuple[OmegaOperator, OmegaOperator]:
    """Factor operators of a faithful system.

    ``B`` sends ``h_I^n`` to ``b_I^n``; ``A`` sends ``x`` to
    ``sum <b_I^n, x>/|I| h_I^n``.  Both have norm one and ``A B = I``.
    """
    if not system.is_faithful:
        raise FaithfulSystemError("the system is not faithful")
    return _factor_matrices(system, lambda index: index.interval.measure, mode)


def check_profile_hypotheses(system: OmegaFaithfulSystem, eta, strict: bool = True) -> None:
    """Raise :class:`HypothesisError` unless ``mu_n >= 1/2`` and the ratio deviations are small."""
    convert = as_fraction if strict else float
    eta = convert(str(eta) if isinstance(eta, float) and strict else eta)
    for n, profile in enumerate(system.profiles):
        mu = convert(profile.mu)
        if mu < convert(Fraction(1, 2)):
            raise HypothesisError(f"component {n}: mu={profile.mu} is below 1/2")
        tolerance = eta * convert(Fraction(1, 8 * 4 ** n))
        for interval, measure in profile.measures.items():
            deviation = abs(convert(interval.measure) / convert(measure) - 1 / mu)
            if deviation > tolerance:
                raise HypothesisError(
                    f"component {n}, interval {interval!r}: ratio deviation {deviation} "
                    f"exceeds {tolerance}")


def build_AB_almost(system: OmegaFaithfulSystem, eta, mode: str = "rational",
                    strict: bool = True) -> tuple[OmegaOperator, OmegaOperator]:
    """Factor operators of an almost faithful system.

    ``B`` sends ``h_I^n`` to ``b~_I^n``; ``A`` sends ``x`` to
    ``sum <b~_I^n, x>/|supp b~_I^n| h_I^n``, so ``A B = I``.  The support
    profile hypotheses under which ``||B|| <= 1`` and ``||A|| <= 4 + eta`` are
    checked first (exactly unless ``strict=False``).
    """
    check_profile_hypotheses(system, eta, strict)
    return _factor_matrices(system, system.support, mode)


def conjugate(a: OmegaOperator, T: OmegaOperator, b: OmegaOperator) -> OmegaOperator:
    return a @ T @ b


def identity_like(T: OmegaOperator) -> OmegaOperator:
    return OmegaOperator.identity(T.domain.n_max, T.mode)


def residual(S: OmegaOperator, target: OmegaOperator, spec, strategy=None,
             method: str = "exact") -> float:
    """Certified upper bound for ``||S - target||``."""
    from .norms import certified_column_bound

    return certified_column_bound(S - target, spec, strategy, method)


def is_identity(T: OmegaOperator, tolerance: float = 0.0) -> bool:
    if T.domain != T.codomain:
        return False
    if T.mode == "rational" and tolerance == 0.0:
        return T == OmegaOperator.identity(T.domain.n_max, "rational")
    deviation = T.float_matrix() - np.eye(len(T.domain))
    return float(np.max(np.abs(deviation), initial=0.0)) <= tolerance


def complement_identity_holds(a: OmegaOperator, T: OmegaOperator, b: OmegaOperator,
                              tolerance: float = 0.0) -> bool:
    """Check ``A (I - T) B = I - A T B`` (exactly in rational mode)."""
    if T.mode != a.mode or T.mode != b.mode:
        raise ModeMismatchError("operators must share a numeric mode")
    left = a @ (identity_like(T) - T) @ b
    right = OmegaOperator.identity(a.codomain.n_max, T.mode) - a @ T @ b
    if T.mode == "rational" and tolerance == 0.0:
        return left == right
    return float(np.max(np.abs(left.float_matrix() - right.float_matrix()), initial=0.0)) <= tolerance


def zero_one_pattern_is_closed(pattern: Mapping[OmegaIndex, int]) -> bool:
    for index, value in pattern.items():
        if value == 0 and index.interval.level < index.component:
            for half in halves(index.interval):
                if pattern.get(OmegaIndex(index.component, half), 1) != 0:
                    return False
    return True


__all__ = [
    "DiagonalSpec", "diagonal_of", "is_delta_large", "multiplier_zero_one", "build_AB_hat",
    "build_AB_almost", "check_profile_hypotheses", "conjugate", "residual", "is_identity",
    "complement_identity_holds", "rational_identity", "to_float_array",
]
