"""Independent reference computations used by the tests.

Nothing here calls into haarfact's grid tables, transforms or kernels: Haar
functions are evaluated from their definition, sign expectations by full
enumeration, and independent copies on an explicit product space.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def haar_value(level: int, position: int, t: Fraction) -> int:
    """``h_I(t)`` for ``I = [position/2^level, (position+1)/2^level)``."""
    left = Fraction(position, 2 ** level)
    mid = Fraction(2 * position + 1, 2 ** (level + 1))
    right = Fraction(position + 1, 2 ** level)
    if left <= t < mid:
        return 1
    if mid <= t < right:
        return -1
    return 0


def midpoints(resolution: int) -> list[Fraction]:
    return [Fraction(2 * i + 1, 2 ** (resolution + 1)) for i in range(2 ** resolution)]


def expected_abs(weights) -> float:
    """``E|sum eps_j w_j|`` by enumerating all sign vectors."""
    weights = [float(w) for w in weights if w != 0]
    if not weights:
        return 0.0
    total = 0.0
    for signs in itertools.product((1, -1), repeat=len(weights)):
        total += abs(sum(s * w for s, w in zip(signs, weights)))
    return total / 2 ** len(weights)


def base_norm(values, base: str, p: float | None) -> float:
    """r.i. norm of a function given by equally weighted cell values."""
    values = np.abs(np.asarray(values, dtype=float))
    if base == "linf":
        return float(values.max(initial=0.0))
    return float(np.mean(values ** p) ** (1.0 / p))


def parse_space(text: str) -> tuple[str, float | None, bool]:
    parts = text.split(":")
    if parts[0] == "linf":
        return "linf", None, len(parts) > 1 and parts[1] == "independent"
    return "lp", float(parts[1]), len(parts) > 2 and parts[2] == "independent"


def hardy_norm(coefficients: dict, space: str) -> float:
    """Norm of ``sum c_I h_I`` with coefficients keyed by ``(level, position)``."""
    base, p, independent = parse_space(space)
    depth = max((lv for lv, _ in coefficients), default=0)
    values = []
    for t in midpoints(depth + 1):
        terms = [c * haar_value(lv, pos, t) for (lv, pos), c in coefficients.items()]
        values.append(expected_abs(terms) if independent else abs(sum(terms)))
    return base_norm(values, base, p)


def product_space_norm(coefficients: dict, n_max: int, space: str) -> float:
    """Norm in the independent sum realized on ``[0,1)^(n_max+1)``.

    ``coefficients`` maps ``(n, level, position)`` to a value; component ``n``
    is a function of coordinate ``n`` only, so distinct components are
    independent by construction.
    """
    base, p, independent = parse_space(space)
    grids = [midpoints(n + 1) for n in range(n_max + 1)]
    values = []
    for point in itertools.product(*grids):
        terms = [c * haar_value(lv, pos, point[n]) for (n, lv, pos), c in coefficients.items()]
        values.append(expected_abs(terms) if independent else abs(sum(terms)))
    return base_norm(values, base, p)


def dual_exponent(p: float) -> float:
    return math.inf if p == 1 else p / (p - 1)


def anchored_subsets(alphas, eta, size: int) -> list[tuple[int, ...]]:
    """All index sets of ``size`` whose values lie within ``eta`` of the smallest index's value."""
    out = []
    for combo in itertools.combinations(range(len(alphas)), size):
        anchor = alphas[combo[0]]
        if all(abs(alphas[k] - anchor) <= eta for k in combo[1:]):
            out.append(combo)
    return out


def conditional_average(values, labels) -> list:
    """Replace each value by the mean over the cells sharing its label."""
    sums, counts = {}, {}
    for value, label in zip(values, labels):
        sums[label] = sums.get(label, 0) + value
        counts[label] = counts.get(label, 0) + 1
    return [sums[label] / counts[label] for label in labels]
