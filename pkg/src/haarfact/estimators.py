"""scikit-learn style wrappers around the pipeline stages.

``fit(T)`` runs a stage and stores the factor operators ``A_``, ``B_`` and the
stage certificate; ``transform(T)`` returns ``A_ T B_`` (with the stage sign).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .linalg import OmegaOperator
from .pipeline import (PipelineConfig, diagonalize, full_factor, reduce_positive_diagonal,
                       scalar_reduce, stabilize_levels)


def check_operator(T) -> OmegaOperator:
    """Accept an :class:`OmegaOperator` or a square matrix of matching size."""
    if isinstance(T, OmegaOperator):
        if not T.is_square:
            raise ValueError("the operator must map a truncation to itself")
        return T
    matrix = np.asarray(T)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("a square matrix is required")
    n_max, size = 0, 1
    while size < matrix.shape[0]:
        n_max += 1
        size += (1 << (n_max + 1)) - 1
    if size != matrix.shape[0]:
        raise ValueError(f"size {matrix.shape[0]} is not the size of a truncation")
    return OmegaOperator(matrix, n_max)


def level_profile(D: OmegaOperator) -> tuple[list[list], list]:
    """Level averages of a diagonal and the largest deviation from them, per component."""
    values = D.diagonal_values()
    alphas, xi = [], []
    for n in range(D.domain.n_max + 1):
        entries = [(index.interval.level, values[i]) for i, index in enumerate(D.domain.indices)
                   if index.component == n]
        averages = []
        for level in range(n + 1):
            row = [v for lv, v in entries if lv == level]
            averages.append(sum(row[1:], row[0]) / len(row))
        alphas.append(averages)
        xi.append(max(abs(v - averages[lv]) for lv, v in entries))
    return alphas, xi


class _StageEstimator(TransformerMixin, BaseEstimator):
    def __init__(self, space="lp:1:independent", eta=0.1, seed=0, max_samples=10_000,
                 column_method="exact"):
        self.space = space
        self.eta = eta
        self.seed = seed
        self.max_samples = max_samples
        self.column_method = column_method

    def _config(self, **extra) -> PipelineConfig:
        return PipelineConfig(space=self.space, eta=self.eta, seed=self.seed,
                              max_samples=self.max_samples, column_method=self.column_method,
                              **extra)

    def _store(self, result):
        self.result_ = result
        self.A_, self.B_ = result.A, result.B
        self.certificate_ = result.certificate
        self.sign_ = result.certificate.sign
        self.depth_ = result.output.domain.n_max
        return self

    def transform(self, T):
        check_is_fitted(self, "A_")
        out = self.A_ @ check_operator(T) @ self.B_
        return -out if self.sign_ == -1 else out


class Diagonalizer(_StageEstimator):
    """Conjugate into a near-diagonal operator; see :func:`diagonalize`."""

    def fit(self, T, y=None):
        result = diagonalize(check_operator(T), self._config())
        self.alphas_, self.xi_ = result.alphas, result.xi
        self.diagonal_ = result.output
        return self._store(result)


class LevelStabilizer(_StageEstimator):
    """Make a diagonal constant on each component; see :func:`stabilize_levels`.

    Without ``alphas`` the level averages of ``D`` itself are used.
    """

    def fit(self, D, y=None, alphas=None, xi=None):
        D = check_operator(D)
        if alphas is None:
            alphas, xi = level_profile(D)
        result = stabilize_levels(D, alphas, xi, self._config())
        self.scalars_ = result.certificate.details["scalars"]
        return self._store(result)


class ScalarReducer(_StageEstimator):
    """Pass to components near one scalar; see :func:`scalar_reduce`."""

    def fit(self, C, y=None):
        result = scalar_reduce(check_operator(C), self._config())
        self.scalar_ = result.scalar
        return self._store(result)


class PositiveDiagonalReducer(_StageEstimator):
    """Make a ``delta``-large diagonal positive; see :func:`reduce_positive_diagonal`."""

    def __init__(self, delta=0.5, space="lp:1:independent", eta=0.1, seed=0,
                 max_samples=10_000, column_method="exact"):
        super().__init__(space, eta, seed, max_samples, column_method)
        self.delta = delta

    def fit(self, T, y=None):
        result = reduce_positive_diagonal(check_operator(T), self.delta, self.eta, self._config())
        return self._store(result)


class IdentityFactorizer(TransformerMixin, BaseEstimator):
    """Factor the identity through ``T`` or ``I - T``; see :func:`full_factor`.

    After ``fit``, ``transform(T)`` returns ``L_ F R_`` where ``F`` is the
    chosen branch, i.e. the identity of the final truncation.
    """

    def __init__(self, space="lp:1:independent", eta=0.1, delta=0.0, mode="auto", seed=0,
                 max_samples=10_000, min_depth=0, max_depth=None, allow_degraded=False,
                 column_method="exact"):
        self.space = space
        self.eta = eta
        self.delta = delta
        self.mode = mode
        self.seed = seed
        self.max_samples = max_samples
        self.min_depth = min_depth
        self.max_depth = max_depth
        self.allow_degraded = allow_degraded
        self.column_method = column_method

    def fit(self, T, y=None):
        config = PipelineConfig(**self.get_params())
        cert = full_factor(check_operator(T), config)
        self.certificate_ = cert
        self.L_, self.R_ = cert.L, cert.R
        self.branch_, self.scalar_ = cert.branch, cert.scalar
        self.depth_ = cert.depth
        return self

    def transform(self, T):
        check_is_fitted(self, "L_")
        T = check_operator(T)
        F = T if self.branch_ == "T" else OmegaOperator.identity(T.domain.n_max, T.mode) - T
        return self.L_ @ F @ self.R_


__all__ = ["Diagonalizer", "LevelStabilizer", "ScalarReducer", "PositiveDiagonalReducer",
           "IdentityFactorizer", "check_operator", "level_profile"]
