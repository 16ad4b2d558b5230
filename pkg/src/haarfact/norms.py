"""Norm evaluation for Haar system Hardy spaces and the independent sum.

A space is a base rearrangement-invariant norm (``L^p`` or the closure in
``L^inf``) together with a Rademacher mode.  In ``constant`` mode the norm of
``sum a_j h_j`` is the base norm of the pointwise sum; in ``independent`` mode
each basis function gets its own random sign and the base norm is applied to
``s -> E|sum eps_j a_j h_j(s)|``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ._kernels import expected_abs_exact, expected_abs_sampled
from .dyadic import ROOT, IndexUniverse, OmegaIndex
from .exceptions import UnsupportedSpaceError
from .linalg import HaarOperator, OmegaCoefficients, OmegaOperator
from .omega import OmegaBasis, build_omega_basis
from .stepfunc import HaarCoefficients, StepFunction

RADEMACHER_MODES = ("constant", "independent")
MAX_EXACT_CUTOFF = 24


@dataclass(frozen=True)
class SpaceSpec:
    """Base norm and Rademacher mode, e.g. ``SpaceSpec.parse("lp:2:independent")``."""

    base: str = "lp"
    p: float | None = 1.0
    rademacher: str = "constant"

    def __post_init__(self):
        if self.base not in ("lp", "linf"):
            raise UnsupportedSpaceError(f"unknown base space {self.base!r}")
        if self.base == "lp":
            if self.p is None or not math.isfinite(self.p) or self.p < 1:
                raise UnsupportedSpaceError(f"exponent must be finite and >= 1, got {self.p}")
        elif self.p is not None:
            object.__setattr__(self, "p", None)
        if self.rademacher not in RADEMACHER_MODES:
            raise UnsupportedSpaceError(f"unknown Rademacher mode {self.rademacher!r}")

    @classmethod
    def parse(cls, text: str | "SpaceSpec") -> "SpaceSpec":
        if isinstance(text, SpaceSpec):
            return text
        parts = text.strip().lower().split(":")
        if parts[0] == "lp":
            if len(parts) < 2 or not re.fullmatch(r"[0-9.eE+-]+", parts[1]):
                raise UnsupportedSpaceError(f"missing exponent in {text!r}")
            mode = parts[2] if len(parts) > 2 else "constant"
            if len(parts) > 3:
                raise UnsupportedSpaceError(f"too many fields in {text!r}")
            return cls("lp", float(parts[1]), mode)
        if parts[0] == "linf":
            mode = parts[1] if len(parts) > 1 else "constant"
            if len(parts) > 2:
                raise UnsupportedSpaceError(f"too many fields in {text!r}")
            return cls("linf", None, mode)
        raise UnsupportedSpaceError(f"cannot parse space {text!r}")

    def __str__(self) -> str:
        if self.base == "linf":
            return f"linf:{self.rademacher}"
        p = int(self.p) if float(self.p).is_integer() else self.p
        return f"lp:{p}:{self.rademacher}"

    @property
    def independent(self) -> bool:
        return self.rademacher == "independent"

    def dual(self) -> "SpaceSpec":
        """The ``L^q`` space with ``1/p + 1/q = 1``; only finite ``q > 1`` is supported."""
        if self.base != "lp" or self.p <= 1:
            raise UnsupportedSpaceError(f"no supported dual for {self}")
        return SpaceSpec("lp", self.p / (self.p - 1), self.rademacher)

    def haar_norm(self, measure) -> float:
        """Norm of a single Haar function supported on a set of the given measure."""
        if self.base == "linf":
            return 1.0
        return float(measure) ** (1.0 / self.p)


@dataclass(frozen=True)
class ExpectationStrategy:
    """Exact sign enumeration up to ``exact_cutoff`` active signs, Monte Carlo above."""

    exact_cutoff: int = 20
    mc_samples: int = 10_000
    seed: int = 0
    chunk: int = 4096

    def __post_init__(self):
        if not 0 <= self.exact_cutoff <= MAX_EXACT_CUTOFF:
            raise ValueError(f"exact_cutoff must lie in [0, {MAX_EXACT_CUTOFF}]")
        if self.mc_samples < 2:
            raise ValueError("at least two Monte Carlo samples are needed")


DEFAULT_STRATEGY = ExpectationStrategy()


@dataclass(frozen=True)
class NormResult:
    value: float
    method: str = "exact"
    samples: int = 0
    seed: int | None = None
    stat_error: float = 0.0

    def __float__(self) -> float:
        return self.value

    def to_json(self) -> dict:
        out = {"value": self.value, "method": self.method, "stat_error": self.stat_error}
        if self.method == "montecarlo":
            out.update(samples=self.samples, seed=self.seed)
        return out


def _base_from_pointwise(g: np.ndarray, spec: SpaceSpec, sigma: np.ndarray | None = None
                         ) -> tuple[float, float]:
    """Base norm of a non-negative pointwise profile plus a delta-method error."""
    if g.size == 0:
        return 0.0, 0.0
    if spec.base == "linf":
        value = float(np.max(g))
        error = float(sigma[int(np.argmax(g))]) if sigma is not None else 0.0
        return value, error
    p = spec.p
    if p == 1.0:
        value = float(np.mean(g))
        error = float(np.sqrt(np.sum(sigma ** 2)) / g.size) if sigma is not None else 0.0
        return value, error
    moment = float(np.mean(g ** p))
    value = moment ** (1.0 / p)
    if sigma is None or value == 0.0:
        return value, 0.0
    moment_error = np.sqrt(np.sum((p * g ** (p - 1) * sigma) ** 2)) / g.size
    return value, float(moment_error * value ** (1.0 - p) / p)


def base_norm(f: StepFunction | np.ndarray, spec: SpaceSpec | str) -> NormResult:
    """``(2^-M sum |f_k|^p)^(1/p)``, or ``max |f_k|`` for the ``L^inf`` closure."""
    spec = SpaceSpec.parse(spec)
    values = f.as_float_array() if isinstance(f, StepFunction) else np.asarray(f, dtype=float)
    value, _ = _base_from_pointwise(np.abs(values), spec)
    return NormResult(value)


def _sign_expectation(terms: np.ndarray, strategy: ExpectationStrategy
                      ) -> tuple[np.ndarray, np.ndarray | None, str, int]:
    """Pointwise ``E|sum eps_j terms[t, j]|`` with Monte Carlo only where needed."""
    points = terms.shape[0]
    if terms.shape[1] == 0:
        return np.zeros(points), None, "exact", 0
    rows = -np.sort(-np.abs(terms), axis=1)
    unique, first, inverse = np.unique(rows, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.count_nonzero(unique, axis=1).astype(np.int64)
    values = np.empty(unique.shape[0])
    sigma = np.zeros(unique.shape[0])
    exact = counts <= strategy.exact_cutoff
    if exact.any():
        values[exact] = expected_abs_exact(np.ascontiguousarray(unique[exact]), counts[exact])
    method, samples = "exact", 0
    for r in np.flatnonzero(~exact):
        method, samples = "montecarlo", strategy.mc_samples
        k = int(counts[r])
        generator = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([strategy.seed, int(first[r])])))
        total = 0.0
        total_sq = 0.0
        drawn = 0
        while drawn < strategy.mc_samples:
            size = min(strategy.chunk, strategy.mc_samples - drawn)
            signs = (1 - 2 * generator.integers(0, 2, size=(size, k), dtype=np.int8)).astype(np.float64)
            mean, std = expected_abs_sampled(unique[r], k, signs)
            total += mean * size
            total_sq += (std ** 2 + mean ** 2) * size
            drawn += size
        mean = total / drawn
        values[r] = mean
        sigma[r] = math.sqrt(max(total_sq / drawn - mean ** 2, 0.0) / drawn)
    g = values[inverse]
    return g, (sigma[inverse] if method == "montecarlo" else None), method, samples


def norm_from_terms(terms: np.ndarray, spec: SpaceSpec,
                    strategy: ExpectationStrategy | None = None) -> NormResult:
    """Norm of the function whose value at cell ``t`` is ``sum_j terms[t, j]``."""
    strategy = strategy or DEFAULT_STRATEGY
    if not spec.independent:
        g = np.abs(terms.sum(axis=1))
        value, _ = _base_from_pointwise(g, spec)
        return NormResult(value)
    g, sigma, method, samples = _sign_expectation(terms, strategy)
    value, error = _base_from_pointwise(g, spec, sigma)
    if method == "exact":
        return NormResult(value)
    return NormResult(value, "montecarlo", samples, strategy.seed, error)


def haar_terms(c: HaarCoefficients, resolution: int | None = None) -> np.ndarray:
    """Per-cell table of ``c_I h_I(t)`` for the (at most one per level) active ``I``."""
    levels = [k.level for k, v in c.items() if v != 0 and not k.is_root]
    depth = max(levels, default=-1)
    resolution = depth + 1 if resolution is None else resolution
    resolution = max(resolution, 0)
    points = 1 << resolution
    cells = np.arange(points, dtype=np.int64)
    columns = []
    root = float(c.coefficients.get(ROOT, 0)) if c.include_root else 0.0
    if root:
        columns.append(np.full(points, root))
    for level in range(depth + 1):
        coefficients = np.zeros(1 << level)
        for k, v in c.items():
            if not k.is_root and k.level == level:
                coefficients[k.position] = float(v)
        position = cells >> (resolution - level)
        sign = 1 - 2 * ((cells >> (resolution - level - 1)) & 1)
        columns.append(coefficients[position] * sign)
    if not columns:
        return np.zeros((points, 0))
    return np.stack(columns, axis=1)


def hardy_norm(c: HaarCoefficients, spec: SpaceSpec | str,
               strategy: ExpectationStrategy | None = None) -> NormResult:
    """Norm of ``sum c_I h_I`` in the Haar system Hardy space ``spec``."""
    return norm_from_terms(haar_terms(c), SpaceSpec.parse(spec), strategy)


def omega_norm(x: OmegaCoefficients, basis: OmegaBasis | None = None,
               spec: SpaceSpec | str = "lp:1:independent",
               strategy: ExpectationStrategy | None = None) -> NormResult:
    """Norm of ``sum a_I^n h_I^n``, one independent sign per index in independent mode."""
    basis = basis or build_omega_basis(x.n_max)
    return norm_from_terms(basis.pointwise_terms(x), SpaceSpec.parse(spec), strategy)


def dual_haar_norm(interval_measure, spec: SpaceSpec) -> float:
    return spec.dual().haar_norm(interval_measure)


# operators ---------------------------------------------------------------------

def _as_omega(S) -> OmegaOperator:
    if isinstance(S, OmegaOperator):
        return S
    if isinstance(S, HaarOperator):
        # a single block is isometric to its copy in component ``depth``
        n = S.depth
        universe = IndexUniverse(n)
        size = len(universe)
        matrix = np.zeros((size, size), dtype=object if S.mode == "rational" else np.float64)
        if S.mode == "rational":
            matrix.fill(0)
        block = universe.component_slice(n)
        matrix[block, block] = S.matrix
        return OmegaOperator(matrix, n, n, S.mode)
    raise TypeError(f"unsupported operator type {type(S).__name__}")


def _row_col_measures(S) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(S, HaarOperator):
        measures = np.array([float(k.measure) for k in S.intervals])
        return measures, measures
    if isinstance(S, OmegaOperator):
        return (np.array([float(m) for m in S.codomain.measures()]),
                np.array([float(m) for m in S.domain.measures()]))
    raise TypeError(f"unsupported operator type {type(S).__name__}")


def column_norms(S, spec: SpaceSpec | str, strategy: ExpectationStrategy | None = None,
                 method: str = "exact", basis: OmegaBasis | None = None) -> np.ndarray:
    """``||S h_J|| / ||h_J||`` for every domain basis vector ``h_J``.

    ``method="exact"`` evaluates each column norm on the grid (falling back
    to the triangle inequality where Monte Carlo would be needed);
    ``method="triangle"`` uses ``sum_K |s_KJ| ||h_K||``.
    """
    spec = SpaceSpec.parse(spec)
    strategy = strategy or DEFAULT_STRATEGY
    if method == "exact" and spec.base == "lp" and spec.p == 2 and not spec.independent:
        # Haar functions are orthogonal with ||h_K||_2^2 = |K|
        rows, cols = _row_col_measures(S)
        squares = (S.float_matrix() ** 2 * rows[:, None]).sum(axis=0)
        return np.sqrt(squares / cols)
    if isinstance(S, HaarOperator) and method == "triangle":
        # the embedding into a component is isometric; skip building it
        norms = np.array([spec.haar_norm(k.measure) for k in S.intervals])
        return (np.abs(S.float_matrix()) * norms[:, None]).sum(axis=0) / norms
    op = _as_omega(S)
    matrix = op.float_matrix()
    rows = op.codomain.indices
    row_norms = np.array([spec.haar_norm(i.interval.measure) for i in rows])
    out = np.empty(matrix.shape[1])
    need_grid = method == "exact" and any(np.count_nonzero(matrix[:, j]) > 1
                                          for j in range(matrix.shape[1]))
    if need_grid:
        basis = basis or build_omega_basis(op.codomain.n_max)
        width = basis.columns_for(op.codomain.n_max)
        active = basis.active[:, :width]
        signs = basis.signs[:, :width].astype(np.float64)
    for j, col_index in enumerate(op.domain.indices):
        column = matrix[:, j]
        nonzero = np.flatnonzero(column)
        if nonzero.size == 0:
            value = 0.0
        elif nonzero.size == 1 or method == "triangle":
            value = float(np.sum(np.abs(column[nonzero]) * row_norms[nonzero]))
        else:
            terms = column[active] * signs
            alive = np.count_nonzero(terms, axis=1).max()
            if spec.independent and alive > strategy.exact_cutoff:
                value = float(np.sum(np.abs(column[nonzero]) * row_norms[nonzero]))
            else:
                value = norm_from_terms(terms, spec, strategy).value
        out[j] = value / spec.haar_norm(col_index.interval.measure)
    return out


def certified_column_bound(S, spec: SpaceSpec | str, strategy: ExpectationStrategy | None = None,
                           method: str = "exact", basis: OmegaBasis | None = None) -> float:
    """Rigorous upper bound ``2 * sum_J ||S h_J|| / ||h_J||`` for the operator norm.

    Each coefficient of a vector in a monotone basis satisfies
    ``|a_J| ||h_J|| <= 2 ||x||``, so summing the normalized column norms
    bounds ``||S||``.
    """
    return float(2.0 * np.sum(column_norms(S, spec, strategy, method, basis)))


def operator_norm_lower(T, spec: SpaceSpec | str, seed: int = 0, trials: int = 16,
                        ascent_steps: int = 16, strategy: ExpectationStrategy | None = None,
                        include_basis: bool = True) -> float:
    """Lower estimate of ``||T||`` from basis vectors, random vectors and a local ascent."""
    spec = SpaceSpec.parse(spec)
    op = _as_omega(T).to_float()
    domain_basis = build_omega_basis(op.domain.n_max)
    codomain_basis = build_omega_basis(op.codomain.n_max)
    size = len(op.domain)

    def ratio(vector: np.ndarray) -> float:
        x = OmegaCoefficients._wrap(vector, op.domain, "float")
        denominator = omega_norm(x, domain_basis, spec, strategy).value
        if denominator == 0.0:
            return 0.0
        y = OmegaCoefficients._wrap(op.matrix.dot(vector), op.codomain, "float")
        return omega_norm(y, codomain_basis, spec, strategy).value / denominator

    best, best_vector = 0.0, None
    if include_basis:
        for j in range(size):
            e = np.zeros(size)
            e[j] = 1.0
            r = ratio(e)
            if r > best:
                best, best_vector = r, e
    generator = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, size])))
    for _ in range(trials):
        v = generator.standard_normal(size)
        r = ratio(v)
        if r > best:
            best, best_vector = r, v
    if best_vector is not None:
        step = 0.5
        current = best_vector / np.max(np.abs(best_vector))
        for _ in range(ascent_steps):
            candidate = current + step * generator.standard_normal(size)
            r = ratio(candidate)
            if r > best:
                best, current = r, candidate
            else:
                step *= 0.7
    return best


def basis_vector_norm(index: OmegaIndex, spec: SpaceSpec) -> float:
    return spec.haar_norm(index.interval.measure)
