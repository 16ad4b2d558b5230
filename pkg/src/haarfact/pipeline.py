"""Staged reduction of an operator to a scalar multiple of the identity.

Each stage takes an operator ``S`` on a truncation of the independent sum and
returns factor operators ``A``, ``B`` with ``A B = I`` together with a simpler
operator close to ``A S B``.  Chaining the stages and inverting the final
near-scalar operator gives ``L``, ``R`` with ``L T R = I`` on the final
truncation (or ``L (I - T) R = I``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import IndexUniverse, component_offset, component_size, intervals_up_to
from .exceptions import HypothesisError, SelectionError, StageFailure, UnsupportedSpaceError
from .faithful import (faithful_from_frequencies, gamlen_gaudet_select, randomize_faithful,
                       randomized_owners, theta_stream)
from .linalg import HaarOperator, OmegaOperator, canonical_json, encode_scalar, invert
from .norms import DEFAULT_STRATEGY, ExpectationStrategy, SpaceSpec, certified_column_bound
from .omega import compress_component, lift_system
from .operators import build_AB_almost, build_AB_hat, is_delta_large
from .stepfunc import as_fraction

MODES = ("auto", "large-diagonal", "primary")
STAGE_SHARES = {"diagonalize": 1, "stabilize": 16, "scalar": 1}
STAGE_TOTAL = sum(STAGE_SHARES.values())


# sufficient depths -------------------------------------------------------------

def _exact(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return as_fraction(value)


def _floor_log2(value: Fraction) -> int:
    """Largest ``j`` with ``2**j <= value`` for a positive rational."""
    j = value.numerator.bit_length() - value.denominator.bit_length()
    while Fraction(2) ** j > value:
        j -= 1
    while Fraction(2) ** (j + 1) <= value:
        j += 1
    return j


def formula_N0(n: int, gamma, eta) -> int:
    """``21 (n+1) + floor(4 log2(gamma / eta))``, evaluated exactly."""
    gamma, eta = _exact(gamma), _exact(eta)
    if gamma <= 0 or eta <= 0:
        raise ValueError("gamma and eta must be positive")
    return 21 * (n + 1) + _floor_log2((gamma / eta) ** 4)


def formula_N1(n: int, gamma, eta) -> int:
    """``n ceil(2 gamma / eta) + 1``."""
    gamma, eta = _exact(gamma), _exact(eta)
    if gamma <= 0 or eta <= 0:
        raise ValueError("gamma and eta must be positive")
    return n * math.ceil(2 * gamma / eta) + 1


def formula_N2(n: int, eta) -> int:
    """``2 n ceil(n / eta + 1) 2^n``."""
    eta = _exact(eta)
    if eta <= 0:
        raise ValueError("eta must be positive")
    return 2 * n * math.ceil(n / eta + 1) * 2 ** n


def formulas(n: int, gamma, eta, delta=None) -> dict[str, int]:
    """Sufficient depths for target depth ``n``; ``delta`` is accepted for symmetry."""
    return {"N0": formula_N0(n, gamma, eta), "N1": formula_N1(n, gamma, eta),
            "N2": formula_N2(n, eta)}


# configuration -------------------------------------------------------------------

def level_weight(n: int) -> int:
    """``sum_{I in D_<=n} 1/|I| = (4^(n+1) - 1) / 3``."""
    return (4 ** (n + 1) - 1) // 3


@dataclass
class PipelineConfig:
    """Tolerances, mode and sampling parameters of :func:`full_factor`.

    The total tolerance ``eta`` is split over the diagonalization,
    stabilization and scalar stages in the ratio 1 : 16 : 1, so the three
    certified errors add up to at most ``eta``.
    """

    space: SpaceSpec | str = "lp:1:independent"
    eta: float = 0.1
    delta: float = 0.0
    mode: str = "auto"
    seed: int = 0
    max_samples: int = 10_000
    min_depth: int = 0
    max_depth: int | None = None
    allow_degraded: bool = False
    diagnostic_draws: int = 64
    column_method: str = "exact"
    strategy: ExpectationStrategy = field(default_factory=lambda: DEFAULT_STRATEGY)

    def __post_init__(self):
        self.space = SpaceSpec.parse(self.space)
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.max_samples < 1:
            raise ValueError("max_samples must be positive")
        if self.column_method not in ("exact", "triangle"):
            raise ValueError("column_method is 'exact' or 'triangle'")

    def stage_eta(self, stage: str) -> float:
        """Tolerance claimed by one stage."""
        return self.eta * STAGE_SHARES[stage] / STAGE_TOTAL

    @property
    def unit_eta(self) -> float:
        return self.eta / STAGE_TOTAL

    def pair_eta(self, n: int, m: int) -> float:
        """Cross-term tolerance between target components ``n`` and ``m``."""
        return (self.unit_eta / 2) * 2.0 ** -(n + m + 2) / (level_weight(n) * level_weight(m))

    def level_eta(self, n: int) -> float:
        return self.pair_eta(n, n)

    def summability(self, n_max: int) -> Fraction:
        """``sum_{n,m} sum_{I,J} eta_{n,m} / (|I||J|)`` over the truncation, exactly."""
        unit = _exact(self.unit_eta)
        total = Fraction(0)
        for n in range(n_max + 1):
            for m in range(n_max + 1):
                total += unit / 2 * Fraction(1, 2 ** (n + m + 2))
        return total

    def to_json(self) -> dict:
        return {"space": str(self.space), "eta": self.eta, "delta": self.delta,
                "mode": self.mode, "seed": self.seed, "max_samples": self.max_samples,
                "min_depth": self.min_depth, "max_depth": self.max_depth,
                "allow_degraded": self.allow_degraded, "column_method": self.column_method,
                "diagnostic_draws": self.diagnostic_draws,
                "strategy": {"exact_cutoff": self.strategy.exact_cutoff,
                             "mc_samples": self.strategy.mc_samples,
                             "seed": self.strategy.seed}}

    @classmethod
    def from_json(cls, data) -> "PipelineConfig":
        data = dict(data)
        strategy = ExpectationStrategy(**data.pop("strategy", {}))
        return cls(strategy=strategy, **data)


def _as_config(config) -> PipelineConfig:
    if config is None:
        return PipelineConfig()
    if isinstance(config, PipelineConfig):
        return config
    return PipelineConfig(**config)


# stage records -------------------------------------------------------------------

@dataclass
class StageCertificate:
    """One link of the chain: ``output ~ sign * A @ input @ B`` with ``A B = I``."""

    name: str
    input_digest: str
    A: OmegaOperator
    B: OmegaOperator
    output: OmegaOperator
    constant: float
    claimed: float
    certified: float
    sign: int = 1
    degraded: bool = False
    details: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return self.output.domain.n_max

    def to_json(self) -> dict:
        return {"name": self.name, "input_digest": self.input_digest,
                "A": self.A.to_json(), "B": self.B.to_json(), "output": self.output.to_json(),
                "constant": float(self.constant), "claimed": float(self.claimed),
                "certified": float(self.certified), "sign": self.sign,
                "degraded": self.degraded, "details": self.details}

    @classmethod
    def from_json(cls, data) -> "StageCertificate":
        return cls(data["name"], data["input_digest"], OmegaOperator.from_json(data["A"]),
                   OmegaOperator.from_json(data["B"]), OmegaOperator.from_json(data["output"]),
                   float(data["constant"]), float(data["claimed"]), float(data["certified"]),
                   int(data.get("sign", 1)), bool(data.get("degraded", False)),
                   dict(data.get("details", {})))


@dataclass
class StageResult:
    certificate: StageCertificate
    system: object = None
    alphas: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    scalar: object = None

    @property
    def output(self) -> OmegaOperator:
        return self.certificate.output

    @property
    def A(self) -> OmegaOperator:
        return self.certificate.A

    @property
    def B(self) -> OmegaOperator:
        return self.certificate.B


def _finish_stage(name, S, A, B, output, constant, claimed, config, sign=1, details=None,
                  allow_excess=False) -> StageCertificate:
    conjugated = A @ S @ B
    if sign == -1:
        conjugated = -conjugated
    certified = certified_column_bound(conjugated - output, config.space, config.strategy,
                                       config.column_method)
    degraded = certified > claimed
    if degraded and not (allow_excess or config.allow_degraded):
        raise StageFailure(name, f"certified residual {certified:.3e} exceeds {claimed:.3e}",
                           {"certified": certified, "claimed": claimed})
    return StageCertificate(name, S.digest(), A, B, output, constant, claimed, certified, sign,
                            degraded, details or {})


def _diagonal_part(S: OmegaOperator) -> OmegaOperator:
    return OmegaOperator.diagonal(list(S.diagonal_values()), S.domain.n_max, S.mode)


def _check_square(T) -> None:
    if not isinstance(T, OmegaOperator):
        raise TypeError("an OmegaOperator is required")
    if not T.is_square:
        raise ValueError("the operator must map a truncation to itself")


# alpha averages ------------------------------------------------------------------

def alpha_averages(T_n: HaarOperator, m: int, k: int):
    """Mean of ``<h_K, T h_K> / |K|`` over the intervals ``K`` of level ``m + k``."""
    level = m + k
    if m < 0 or k < 0 or level > T_n.depth:
        raise ValueError(f"level {level} is outside depth {T_n.depth}")
    start = (1 << level) - 1
    values = [T_n.matrix[i, i] for i in range(start, start + (1 << level))]
    if T_n.mode == "rational":
        return sum(values, Fraction(0)) / len(values)
    return float(np.mean(np.asarray(values, dtype=np.float64)))


# randomized block vectors --------------------------------------------------------

def block_coefficients(n: int, m: int, theta: np.ndarray, depth: int,
                       first_level: int = 0) -> np.ndarray:
    """Dense coefficients of the randomized block functions.

    Rows are the intervals of levels ``first_level .. depth`` in ``iota``
    order, columns the target intervals of ``D_<=n``.
    """
    rows = (1 << (depth + 1)) - (1 << first_level)
    out = np.zeros((rows, (1 << (n + 1)) - 1))
    for j, (owner, signs) in enumerate(randomized_owners(n, m, theta)):
        level = m + j
        row = (1 << level) - (1 << first_level) + np.arange(1 << level)
        out[row, (1 << j) - 1 + owner] = signs
    return out


def _target_measures(n: int) -> np.ndarray:
    return np.array([float(k.measure) for k in intervals_up_to(n)])


def _target_levels(n: int) -> np.ndarray:
    return np.array([k.level for k in intervals_up_to(n)])


@dataclass
class ConcentrationReport:
    """Empirical moments of ``X_IJ = <b_I, T b_J>`` over random sign draws."""

    n: int
    m: int
    draws: int
    mean: np.ndarray
    variance: np.ndarray
    bound_norm: float

    @property
    def variance_bound(self) -> float:
        return 3.0 * self.bound_norm ** 2 * 2.0 ** (-self.m / 2)

    def off_diagonal(self) -> list[tuple[int, int]]:
        size = self.mean.shape[0]
        return [(i, j) for i in range(size) for j in range(size) if i != j]

    def mean_within(self, sigmas: float = 4.0) -> bool:
        for i, j in self.off_diagonal():
            sd = math.sqrt(self.variance[i, j])
            if abs(self.mean[i, j]) > sigmas * sd / math.sqrt(self.draws) + 1e-300:
                return False
        return True

    def variance_within(self, slack: float = 1.1) -> bool:
        return all(self.variance[i, j] <= self.variance_bound * slack
                   for i, j in self.off_diagonal())

    def to_json(self) -> dict:
        pairs = self.off_diagonal()
        return {"n": self.n, "m": self.m, "draws": self.draws,
                "max_abs_mean": max((abs(float(self.mean[p])) for p in pairs), default=0.0),
                "max_variance": max((float(self.variance[p]) for p in pairs), default=0.0),
                "variance_bound": self.variance_bound, "bound_norm": self.bound_norm}


def concentration_statistics(T_n: HaarOperator, n: int, m: int, draws: int, seed=0,
                             bound_norm: float | None = None, space="lp:2:constant",
                             chunk: int = 100) -> ConcentrationReport:
    """Sample ``X_IJ`` for ``draws`` random faithful systems on frequencies ``m..m+n``.

    Only the levels ``m .. m+n`` of ``T_n`` enter, so ``T_n`` may be any
    block of depth at least ``m + n``.  ``bound_norm`` defaults to the
    certified column bound of ``T_n`` in ``space``: exact column norms in
    ``L^2`` with constant signs, the triangle inequality otherwise.
    """
    if m + n > T_n.depth:
        raise ValueError(f"frequencies up to {m + n} exceed depth {T_n.depth}")
    if bound_norm is None:
        spec = SpaceSpec.parse(space)
        closed_form = spec.base == "lp" and spec.p == 2 and not spec.independent
        bound_norm = certified_column_bound(T_n, spec, method="exact" if closed_form
                                            else "triangle")
    first = (1 << m) - 1
    last = (1 << (m + n + 1)) - 1
    coeffs = T_n.float_matrix()[first:last, first:last]
    weights = np.array([2.0 ** -k for k in range(m, m + n + 1) for _ in range(1 << k)])
    size = (1 << (n + 1)) - 1
    samples = np.empty((draws, size, size))
    count = (1 << (m + n + 1)) - 1
    for start in range(0, draws, chunk):
        stop = min(draws, start + chunk)
        blocks = [block_coefficients(n, m, theta_stream((seed, n, m, d), count), m + n, m)
                  for d in range(start, stop)]
        stacked = np.concatenate(blocks, axis=1)
        image = coeffs @ stacked
        for i, b in enumerate(blocks):
            cols = slice(i * size, (i + 1) * size)
            samples[start + i] = b.T @ (weights[:, None] * image[:, cols])
    return ConcentrationReport(n, m, draws, samples.mean(axis=0), samples.var(axis=0, ddof=1)
                               if draws > 1 else np.zeros((size, size)), float(bound_norm))


# diagonalization -----------------------------------------------------------------

@dataclass
class _Accepted:
    component: int
    m: int
    theta: np.ndarray
    draws: int
    offdiag: float
    deviation: float


def _cross_term(Tf, weights, universe, N, prior) -> float:
    if not prior:
        return 0.0
    block = universe.component_slice(N)
    vectors = np.stack(prior, axis=1)
    forward = np.abs(weights[block, None] * (Tf[block, :] @ vectors)).sum(axis=0)
    backward = np.abs((weights[:, None] * vectors).T @ Tf[:, block]).sum(axis=1)
    return float(max(forward.max(), backward.max()))


def _screen(X, measures, levels, alphas):
    diagonal = np.diag(X) / measures
    off = np.abs(X - np.diag(np.diag(X))) / measures[:, None]
    deviation = np.abs(diagonal - np.asarray(alphas)[levels])
    return float(off.max(initial=0.0)), float(deviation.max(initial=0.0))


def _search_component(n, Tf, weights, universe, prior, last, config, budget_log):
    eta_n = config.level_eta(n)
    tolerance = 8.0 ** -n * eta_n
    measures, levels = _target_measures(n), _target_levels(n)
    candidates = []
    for N in range(max(n, last + 1), universe.n_max + 1):
        cross = _cross_term(Tf, weights, universe, N, prior)
        if cross > eta_n:
            budget_log.append({"N": N, "cross": cross})
            continue
        candidates.extend((N, m) for m in range(N - n, -1, -1))
    if not candidates:
        return None
    share = max(1, config.max_samples // len(candidates))
    best = None
    for N, m in candidates:
        block = universe.component_slice(N)
        CN = Tf[block, block]
        wN = weights[block]
        diag = np.diag(CN)
        alphas = [float(np.mean(diag[(1 << (m + k)) - 1:(1 << (m + k + 1)) - 1]))
                  for k in range(n + 1)]
        count = (1 << (m + n + 1)) - 1
        for draw in range(share):
            # draw 0 is the unrandomized system, so diagonal inputs keep A = B = I
            theta = (np.ones(count, dtype=np.int64) if draw == 0
                     else theta_stream((config.seed, n, N, m, draw), count))
            Bc = block_coefficients(n, m, theta, N)
            X = Bc.T @ (wN[:, None] * (CN @ Bc))
            off, dev = _screen(X, measures, levels, alphas)
            score = max(off / eta_n, dev / tolerance)
            if best is None or score < best[0]:
                best = (score, N, m, draw)
            if off <= eta_n and dev <= tolerance:
                return _Accepted(N, m, theta, draw + 1, off, dev)
            if m == 0 and n == 0:
                break
    budget_log.append({"n": n, "best_score": best[0], "best": best[1:]})
    return None


def _concentration_diagnostic(Tf, universe, acc: _Accepted, n, config, bound_norm):
    block = universe.component_slice(acc.component)
    T_N = HaarOperator(Tf[block, block], acc.component, "float")
    draws = config.diagnostic_draws
    if draws < 2 or n == 0:
        return None
    report = concentration_statistics(T_N, n, acc.m, draws, (config.seed, acc.component),
                                      bound_norm)
    out = report.to_json()
    out["variance_within"] = report.variance_within()
    return out


def diagonalize(T: OmegaOperator, config=None) -> StageResult:
    """Conjugate ``T`` by a lifted randomized faithful system into a near-diagonal operator.

    Target components are added one at a time: component ``n`` is placed in
    the first ambient component ``N`` (after the previous one) whose cross
    terms with the earlier block functions are below ``eta_n``, and random
    sign systems on frequencies ``m .. m+n`` are drawn until the off-diagonal
    entries and the spread of the diagonal around the level averages are small.
    The depth is the largest one whose certified residual meets the stage
    tolerance.
    """
    config = _as_config(config)
    _check_square(T)
    if config.space.base == "linf":
        raise UnsupportedSpaceError("the Rademacher functions are not weakly null in L^inf")
    universe = T.domain
    Tf = T.float_matrix()
    weights = np.array([float(m) for m in universe.measures()])
    limit = universe.n_max if config.max_depth is None else min(config.max_depth, universe.n_max)
    accepted: list[_Accepted] = []
    prior: list[np.ndarray] = []
    log: list[dict] = []
    for n in range(limit + 1):
        found = _search_component(n, Tf, weights, universe, prior,
                                  accepted[-1].component if accepted else -1, config, log)
        if found is None:
            break
        accepted.append(found)
        lifted = np.zeros((len(universe), (1 << (n + 1)) - 1))
        offset = component_offset(found.component)
        lifted[offset:offset + component_size(found.component)] = \
            block_coefficients(n, found.m, found.theta, found.component)
        prior.extend(lifted.T)

    claimed = config.stage_eta("diagonalize")
    while True:
        systems = [randomize_faithful(n, a.m, signs=a.theta) for n, a in enumerate(accepted)]
        omega = lift_system(systems, [a.component for a in accepted], universe.n_max)
        A, B = build_AB_hat(omega, T.mode)
        S = A @ T @ B
        D = _diagonal_part(S)
        residual = certified_column_bound(S - D, config.space, config.strategy,
                                          config.column_method)
        if residual <= claimed or len(accepted) == 1:
            break
        log.append({"dropped_depth": len(accepted) - 1, "residual": residual})
        accepted.pop()

    depth = len(accepted) - 1
    alphas, xi = [], []
    for n, a in enumerate(accepted):
        T_N = compress_component(T, a.component)
        level_alpha = [alpha_averages(T_N, a.m, k) for k in range(n + 1)]
        alphas.append(level_alpha)
        spread = max(abs(D.matrix[i, i] - level_alpha[index.interval.level])
                     for i, index in enumerate(D.domain.indices) if index.component == n)
        xi.append(spread)
    bound_norm = certified_column_bound(T, config.space, config.strategy, config.column_method)
    diagnostics = [_concentration_diagnostic(Tf, universe, a, n, config, bound_norm)
                   for n, a in enumerate(accepted)]
    details = {"components": [a.component for a in accepted], "frequencies": [a.m for a in accepted],
               "draws": [a.draws for a in accepted], "depth": depth,
               "alphas": [[encode_scalar(v, T.mode) for v in row] for row in alphas],
               "xi": [encode_scalar(v, T.mode) for v in xi],
               "level_eta": [config.level_eta(n) for n in range(depth + 1)],
               "concentration": diagnostics, "search": log,
               "sufficient_N0": formula_N0(depth, max(bound_norm, 1e-300), claimed)}
    degraded = depth < config.min_depth
    if degraded and not config.allow_degraded:
        raise StageFailure("diagonalize", f"reached depth {depth} < {config.min_depth}", details)
    cert = _finish_stage("diagonalize", T, A, B, D, 1.0, claimed, config, details=details)
    cert.degraded = cert.degraded or degraded
    return StageResult(cert, omega, alphas, xi)


# stabilization ---------------------------------------------------------------------

def select_stable_frequencies(alphas: Sequence, eta, n: int) -> tuple[int, ...] | None:
    """First ``k_0`` with ``n`` later levels whose averages are within ``eta`` of ``alpha_{k_0}``."""
    for k0, anchor in enumerate(alphas):
        later = [k for k in range(k0 + 1, len(alphas)) if abs(alphas[k] - anchor) <= eta]
        if len(later) >= n:
            return (k0, *later[:n])
    return None


def max_stable_count(alphas: Sequence, eta) -> int:
    """Largest ``1 + #{k > k_0 : |alpha_k - alpha_{k_0}| <= eta}`` over ``k_0``."""
    best = 0
    for k0, anchor in enumerate(alphas):
        best = max(best, 1 + sum(1 for a in alphas[k0 + 1:] if abs(a - anchor) <= eta))
    return best


@dataclass
class ComponentStabilization:
    frequencies: tuple[int, ...]
    c: object
    system: object
    averaged: dict


def stabilize_component(diagonal, alphas: Sequence, eta, n: int) -> ComponentStabilization:
    """Average a level-wise near-constant diagonal over stable frequencies.

    ``diagonal`` maps intervals (or is a :class:`HaarOperator`) to the entries
    ``d_K``.  The returned averages ``d^_I = sum_{K in B_I} d_K |K| / |I|``
    lie within ``eta + xi`` of ``c = alpha_{k_0}`` whenever every ``d_K`` is
    within ``xi`` of its level average.
    """
    if isinstance(diagonal, HaarOperator):
        diagonal = diagonal.diagonal_entries()
    frequencies = select_stable_frequencies(alphas, eta, n)
    if frequencies is None:
        gamma = max((abs(a) for a in alphas), default=0) or 1
        raise StageFailure("stabilize", f"no {n + 1} frequencies within {eta}",
                           {"available": len(alphas), "required_N1": formula_N1(n, gamma, eta),
                            "max_stable_count": max_stable_count(alphas, eta)})
    system = faithful_from_frequencies(frequencies)
    averaged = {}
    for interval, block in system.blocks.items():
        total = sum(diagonal[k] * k.measure for k, _ in block)
        averaged[interval] = total / interval.measure
    return ComponentStabilization(frequencies, alphas[frequencies[0]], system, averaged)


def stabilize_levels(D: OmegaOperator, alphas: Sequence[Sequence], xi: Sequence,
                     config=None) -> StageResult:
    """Replace a diagonal with level-wise near-constant components by a component-scalar one."""
    config = _as_config(config)
    _check_square(D)
    if not D.is_diagonal():
        raise ValueError("stabilize_levels needs a diagonal operator")
    claimed = config.stage_eta("stabilize")
    n1 = D.domain.n_max
    chosen: list[tuple[int, tuple[int, ...]]] = []
    last = -1
    for n in range(n1 + 1):
        tolerance = 4.0 ** -n * config.unit_eta
        pick = None
        for j in range(max(n, last + 1), n1 + 1):
            if float(xi[j]) > tolerance:
                continue
            frequencies = select_stable_frequencies(alphas[j], tolerance, n)
            if frequencies is not None:
                pick = (j, frequencies)
                break
        if pick is None:
            break
        chosen.append(pick)
        last = pick[0]
    gamma = max(abs(float(v)) for v in D.diagonal_values()) or 1.0
    details_base = {"required_N1": formula_N1(len(chosen), gamma, config.unit_eta),
                    "available": n1}

    while True:
        systems = [faithful_from_frequencies(f) for _, f in chosen]
        omega = lift_system(systems, [j for j, _ in chosen], n1)
        A, B = build_AB_hat(omega, D.mode)
        scalars = [alphas[j][f[0]] for j, f in chosen]
        target = IndexUniverse(len(chosen) - 1)
        C = OmegaOperator.diagonal([scalars[i.component] for i in target.indices],
                                   target.n_max, D.mode)
        residual = certified_column_bound(A @ D @ B - C, config.space, config.strategy,
                                          config.column_method)
        if residual <= claimed or len(chosen) == 1:
            break
        chosen.pop()
    details = dict(details_base, components=[j for j, _ in chosen],
                   frequencies=[list(f) for _, f in chosen],
                   scalars=[encode_scalar(c, D.mode) for c in scalars], depth=len(chosen) - 1)
    cert = _finish_stage("stabilize", D, A, B, C, 1.0, claimed, config, details=details)
    return StageResult(cert, omega)


# scalar reduction ---------------------------------------------------------------------

def component_scalars(C: OmegaOperator) -> list:
    """The value ``c_n`` of a component-scalar diagonal on each component."""
    if not C.is_diagonal():
        raise HypothesisError("the operator is not diagonal")
    values: dict[int, object] = {}
    for i, index in enumerate(C.domain.indices):
        value = C.matrix[i, i]
        if values.setdefault(index.component, value) != value:
            raise HypothesisError(f"component {index.component} is not a scalar multiple of I")
    return [values[n] for n in range(C.domain.n_max + 1)]


def densest_value(values: Sequence):
    """Value with the most others in its ``eps``-neighborhood, halving ``eps`` until unique.

    Ties that survive are broken toward larger ``|c|`` and then positive ``c``.
    """
    values = list(values)
    if not values:
        raise ValueError("no values")
    spread = max(values) - min(values)
    candidates = sorted(set(values), key=lambda v: (abs(v), v), reverse=True)
    if spread == 0 or len(candidates) == 1:
        return candidates[0]
    eps = spread
    for _ in range(200):
        counts = {c: sum(1 for v in values if abs(v - c) <= eps) for c in candidates}
        top = max(counts.values())
        candidates = [c for c in candidates if counts[c] == top]
        if len(candidates) == 1:
            break
        eps = eps / 2
        if eps == 0:
            break
    return candidates[0]


def scalar_chain(scalars: Sequence, c, eta) -> list[int]:
    """Greedy increasing components with ``|c_N(n) - c| <= 8^-1 4^-n eta``."""
    chain: list[int] = []
    for j, value in enumerate(scalars):
        n = len(chain)
        bound = (Fraction(1, 8 * 4 ** n) * _exact(eta) if isinstance(value, Fraction)
                 else eta / (8 * 4 ** n))
        if abs(value - c) <= bound:
            chain.append(j)
    return chain


def scalar_reduce(C: OmegaOperator, config=None) -> StageResult:
    """Pass to the components whose scalar is close to one cluster value ``c``."""
    config = _as_config(config)
    _check_square(C)
    claimed = config.stage_eta("scalar")
    scalars = component_scalars(C)
    c = densest_value(scalars)
    chain = scalar_chain(scalars, c, claimed)
    if not chain:
        raise StageFailure("scalar", "no admissible cluster value", {"scalars": scalars})
    omega = lift_system([faithful_from_frequencies(range(n + 1)) for n in range(len(chain))],
                        chain, C.domain.n_max)
    A, B = build_AB_hat(omega, C.mode)
    depth = len(chain) - 1
    output = OmegaOperator.identity(depth, C.mode) * c
    details = {"components": chain, "scalar": encode_scalar(c, C.mode), "depth": depth,
               "scalars": [encode_scalar(v, C.mode) for v in scalars]}
    cert = _finish_stage("scalar", C, A, B, output, 1.0, claimed, config, details=details)
    return StageResult(cert, omega, scalar=c)


# positive diagonal -------------------------------------------------------------------

def reduce_positive_diagonal(T: OmegaOperator, delta, eta=None, config=None) -> StageResult:
    """Conjugate a ``delta``-large diagonal operator into one with diagonal ``>= delta``.

    For each sign the almost faithful systems of the sign selection are
    stacked in increasing components; the sign reaching the larger depth is
    kept (ties go to ``+1``) and the output is ``sign * A T B``.
    """
    config = _as_config(config)
    _check_square(T)
    eta = config.eta if eta is None else eta
    if not is_delta_large(T, delta):
        raise HypothesisError(f"the diagonal is not {delta}-large")
    n_max = T.domain.n_max
    limit = n_max if config.max_depth is None else min(config.max_depth, n_max)
    blocks = {N: compress_component(T, N) for N in range(n_max + 1)}
    outcomes = {}
    for sign in (1, -1):
        picked, last = [], -1
        for n in range(limit + 1):
            found = None
            for N in range(max(n, last + 1), n_max + 1):
                T_N = blocks[N]
                try:
                    selection = gamlen_gaudet_select(T_N.diagonal_entries(), n, eta, delta,
                                                     depth=N, operator=T_N, sign=sign)
                except SelectionError:
                    continue
                found = (N, selection)
                break
            if found is None:
                break
            picked.append(found)
            last = found[0]
        outcomes[sign] = picked
    sign = max((1, -1), key=lambda s: (len(outcomes[s]), s))
    picked = outcomes[sign]
    if not picked:
        raise StageFailure("positive-diagonal", "no sign admits a depth-0 selection",
                           {"delta": str(delta)})
    omega = lift_system([s.system for _, s in picked], [N for N, _ in picked], n_max)
    A, B = build_AB_almost(omega, eta, T.mode)
    output = A @ T @ B
    if sign == -1:
        output = -output
    details = {"components": [N for N, _ in picked], "depth": len(picked) - 1,
               "mu": [str(s.profile.mu) for _, s in picked], "delta": str(delta)}
    cert = _finish_stage("positive-diagonal", T, A, B, output, 4.0 + float(eta), 0.0, config,
                         sign=sign, details=details)
    return StageResult(cert, omega)


# endgame ------------------------------------------------------------------------------

@dataclass
class EndgameResult:
    L: OmegaOperator
    R: OmegaOperator
    scalar: object
    error: float
    neumann_bound: float
    identity_residual: float


def neumann_bound(scalar, error, constant=1.0) -> float:
    """``constant / (|c| (1 - error/|c|))``; infinite when the series diverges."""
    c = abs(float(scalar))
    if c == 0 or error / c >= 1:
        return math.inf
    return float(constant) / c / (1.0 - error / c)


def endgame_invert(M: OmegaOperator, scalar, error: float, A: OmegaOperator, B: OmegaOperator,
                   constant: float = 1.0) -> EndgameResult:
    """Invert ``M = A F B`` close to ``scalar * I``: ``L = M^-1 A``, ``R = B``."""
    c = abs(float(scalar))
    if c == 0 or error / c >= 1:
        raise StageFailure("endgame", "spectral condition violated",
                           {"scalar": float(scalar), "error": error})
    inverse = invert(M.matrix, M.mode)
    inv_op = OmegaOperator(inverse, M.codomain, M.domain, M.mode)
    L = inv_op @ A
    product = inv_op @ M
    identity = np.eye(len(M.domain))
    residual = float(np.max(np.abs(product.float_matrix() - identity), initial=0.0))
    return EndgameResult(L, B, scalar, error, neumann_bound(scalar, error, constant), residual)


# full pipeline ------------------------------------------------------------------------

@dataclass
class FactorizationCertificate:
    """Everything needed to re-check ``L F R = I`` with ``F = T`` or ``F = I - T``."""

    operator_digest: str
    config: PipelineConfig
    branch: str
    scalar: object
    chain_scalar: object
    sign: int
    stages: list[StageCertificate]
    A: OmegaOperator
    B: OmegaOperator
    L: OmegaOperator
    R: OmegaOperator
    chain_constant: float
    chain_error: float
    direct_error: float
    neumann_bound: float
    identity_residual: float
    mode: str
    degraded: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def certified_error(self) -> float:
        return min(self.chain_error, self.direct_error)

    @property
    def depth(self) -> int:
        return self.L.codomain.n_max

    def to_json(self) -> dict:
        return {
            "format": "haarfact-certificate/1",
            "operator_digest": self.operator_digest,
            "config": self.config.to_json(),
            "mode": self.mode,
            "branch": self.branch,
            "scalar": encode_scalar(self.scalar, self.mode),
            "chain_scalar": encode_scalar(self.chain_scalar, self.mode),
            "sign": self.sign,
            "depth": self.depth,
            "stages": [s.to_json() for s in self.stages],
            "chain": {"constant": self.chain_constant, "error": self.chain_error,
                      "direct_error": self.direct_error,
                      "certified_error": self.certified_error},
            "bounds": {"neumann": self.neumann_bound, **self.notes.get("targets", {})},
            "identity_residual": self.identity_residual,
            "A": self.A.to_json(), "B": self.B.to_json(),
            "L": self.L.to_json(), "R": self.R.to_json(),
            "degraded": self.degraded,
            "formulas": self.notes.get("formulas", {}),
        }

    def dumps(self) -> str:
        return canonical_json(self.to_json())

    @classmethod
    def from_json(cls, data) -> "FactorizationCertificate":
        mode = data["mode"]
        from .linalg import decode_scalar

        chain = data["chain"]
        bounds = dict(data.get("bounds", {}))
        neumann = bounds.pop("neumann")
        return cls(data["operator_digest"], PipelineConfig.from_json(data["config"]),
                   data["branch"], decode_scalar(data["scalar"], mode),
                   decode_scalar(data["chain_scalar"], mode), int(data["sign"]),
                   [StageCertificate.from_json(s) for s in data["stages"]],
                   OmegaOperator.from_json(data["A"]), OmegaOperator.from_json(data["B"]),
                   OmegaOperator.from_json(data["L"]), OmegaOperator.from_json(data["R"]),
                   float(chain["constant"]), float(chain["error"]), float(chain["direct_error"]),
                   float(neumann), float(data["identity_residual"]), mode,
                   bool(data.get("degraded", False)),
                   {"targets": bounds, "formulas": data.get("formulas", {})})


def compose_chain(stages: Sequence[StageCertificate]) -> tuple[float, float]:
    """Constant and error of the composed chain.

    Stage ``k`` applied after a chain with error ``E`` gives error
    ``e_k + C_k E``; constants multiply.
    """
    constant, error = 1.0, 0.0
    for stage in stages:
        error = stage.certified + stage.constant * error
        constant *= stage.constant
    return constant, error


def composite_factors(stages: Sequence[StageCertificate]) -> tuple[OmegaOperator, OmegaOperator]:
    A, B = stages[0].A, stages[0].B
    for stage in stages[1:]:
        A = stage.A @ A
        B = B @ stage.B
    return A, B


def _targets(config: PipelineConfig, used_positive: bool, branch: str, achieved: float) -> dict:
    targets = {"error_target": float(config.eta)}
    if config.delta > 0:
        targets["constant_target"] = (4.0 if used_positive else 1.0) / float(config.delta)
    else:
        targets["constant_target"] = 2.0 / (1.0 - 2.0 * float(config.eta))
    targets["achieved_constant_bound"] = achieved
    return targets


def full_factor(T: OmegaOperator, config=None) -> FactorizationCertificate:
    """Run the whole chain on ``T`` and invert the resulting near-scalar operator."""
    config = _as_config(config)
    _check_square(T)
    delta = config.delta
    large = delta > 0 and is_delta_large(T, _exact(delta) if T.mode == "rational" else delta)
    positive = large and is_delta_large(T, _exact(delta) if T.mode == "rational" else delta,
                                        positive=True)
    if config.mode == "large-diagonal" and not large:
        raise HypothesisError(f"large-diagonal mode needs a {delta}-large diagonal")

    stages: list[StageCertificate] = []
    current, sign = T, 1
    used_positive = config.mode != "primary" and large and not positive
    if used_positive:
        stage = reduce_positive_diagonal(T, _exact(delta) if T.mode == "rational" else delta,
                                         config.eta, config)
        stages.append(stage.certificate)
        current, sign = stage.output, stage.certificate.sign
    diag = diagonalize(current, config)
    stages.append(diag.certificate)
    stab = stabilize_levels(diag.output, diag.alphas, diag.xi, config)
    stages.append(stab.certificate)
    scal = scalar_reduce(stab.output, config)
    stages.append(scal.certificate)

    constant, chain_error = compose_chain(stages)
    A, B = composite_factors(stages)
    s = scal.scalar if sign == 1 else -scal.scalar
    conjugated = A @ T @ B
    depth = conjugated.domain.n_max
    identity = OmegaOperator.identity(depth, T.mode)
    half = Fraction(1, 2) if T.mode == "rational" else 0.5
    if config.mode == "primary" or not large:
        order = ["T", "I-T"] if s >= half else ["I-T", "T"]
    else:
        order = ["T"]
    failures = {}
    for branch in order:
        if branch == "T":
            M, scalar = conjugated, s
        else:
            M, scalar = identity - conjugated, 1 - s
        direct = certified_column_bound(M - identity * scalar, config.space, config.strategy,
                                        config.column_method)
        error = min(chain_error, direct)
        try:
            end = endgame_invert(M, scalar, error, A, B, constant)
        except StageFailure as exc:
            failures[branch] = exc.diagnostic
            continue
        F = T if branch == "T" else OmegaOperator.identity(T.domain.n_max, T.mode) - T
        end.identity_residual = float(np.max(np.abs(
            (end.L @ F @ end.R).float_matrix() - np.eye(len(identity.domain))), initial=0.0))
        gamma = max(certified_column_bound(T, config.space, config.strategy, "triangle"), 1e-300)
        notes = {"targets": _targets(config, used_positive, branch, end.neumann_bound),
                 "formulas": formulas(depth, gamma, config.eta)}
        return FactorizationCertificate(
            T.digest(), config, branch, scalar, s, sign, stages, A, B, end.L, end.R, constant,
            chain_error, direct, end.neumann_bound, end.identity_residual, T.mode,
            any(st.degraded for st in stages), notes)
    raise StageFailure("endgame", "no branch satisfies the spectral condition", failures)


__all__ = [
    "PipelineConfig", "StageCertificate", "StageResult", "FactorizationCertificate",
    "ConcentrationReport", "formulas", "formula_N0", "formula_N1", "formula_N2",
    "alpha_averages", "block_coefficients", "concentration_statistics", "diagonalize",
    "select_stable_frequencies", "max_stable_count", "stabilize_component", "stabilize_levels",
    "component_scalars", "densest_value", "scalar_chain", "scalar_reduce",
    "reduce_positive_diagonal", "endgame_invert", "neumann_bound", "compose_chain",
    "composite_factors", "full_factor", "level_weight",
]
