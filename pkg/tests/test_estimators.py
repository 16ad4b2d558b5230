from fractions import Fraction as F

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from haarfact import OmegaOperator
from haarfact.estimators import (Diagonalizer, IdentityFactorizer, LevelStabilizer,
                                 PositiveDiagonalReducer, ScalarReducer, check_operator)


def test_parameters_round_trip_through_clone():
    model = IdentityFactorizer(eta=0.05, delta=0.6, seed=4)
    copy = clone(model)
    assert copy.get_params() == model.get_params()


def test_unfitted_transform_raises():
    with pytest.raises(NotFittedError):
        Diagonalizer().transform(np.eye(4))


def test_matrix_input_is_accepted():
    op = check_operator(np.eye(11))
    assert op.domain.n_max == 2
    with pytest.raises(ValueError):
        check_operator(np.eye(5))


def test_identity_factorizer_round_trip():
    T = OmegaOperator.identity(2) * F(3, 4)
    model = IdentityFactorizer().fit(T)
    assert model.branch_ == "T" and model.scalar_ == F(3, 4)
    assert model.transform(T) == OmegaOperator.identity(model.depth_)


def test_stage_estimators_chain():
    T = OmegaOperator.identity(2) * F(2, 5)
    diag = Diagonalizer().fit(T)
    D = diag.transform(T)
    assert D == diag.diagonal_
    stab = LevelStabilizer().fit(D, alphas=diag.alphas_, xi=diag.xi_)
    C = stab.transform(D)
    scalar = ScalarReducer().fit(C)
    assert scalar.scalar_ == F(2, 5)
    assert scalar.transform(C) == OmegaOperator.identity(scalar.depth_) * F(2, 5)


def test_positive_diagonal_reducer_sign():
    model = PositiveDiagonalReducer(delta=1).fit(-OmegaOperator.identity(1))
    assert model.sign_ == -1
    assert model.transform(-OmegaOperator.identity(1)) == OmegaOperator.identity(model.depth_)


def test_fit_transform_matches_fit_then_transform():
    T = OmegaOperator.identity(1) * F(1, 2)
    assert Diagonalizer().fit_transform(T) == Diagonalizer().fit(T).transform(T)
