"""Deterministic test operators and JSON file helpers."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .dyadic import IndexUniverse, OmegaIndex
from .linalg import OmegaCoefficients, OmegaOperator
from .norms import certified_column_bound
from .operators import multiplier_zero_one
from .stepfunc import HaarCoefficients, as_fraction

KINDS = ("identity", "diagonal", "multiplier", "random", "perturbed-identity")
DEFAULT_DIAGONAL_VALUES = ("3/5", "4/5")


def _generator(seed: int, kind: str) -> np.random.Generator:
    tag = KINDS.index(kind)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), tag])))


def _scaled_to(matrix: np.ndarray, n_max: int, gamma: float, space) -> OmegaOperator:
    op = OmegaOperator(matrix, n_max, mode="float")
    bound = certified_column_bound(op, space)
    if bound == 0:
        return op
    op = op * (gamma / bound)
    # absorb rounding in the last place
    while certified_column_bound(op, space) > gamma:
        op = op * (1 - 1e-12)
    return op


def generate_operator(kind: str, n_max: int, seed: int = 0,
                      params: Mapping | None = None) -> OmegaOperator:
    """Build a test operator on the truncation ``n_max``.

    ``params`` keys by kind:

    - ``diagonal``: ``values`` (default ``3/5, 4/5``), drawn i.i.d. per index.
      Rational unless a value is given as a float.
    - ``multiplier``: ``density`` of zeros (default 0.3).  Zeros are closed
      downward within each component.
    - ``random``: ``gamma`` (default 1).  Gaussian entries are scaled so the
      certified column bound in ``space`` is at most ``gamma``.
    - ``perturbed-identity``: ``eps`` (default 0.05), the identity plus a
      ``random`` operator with ``gamma = eps``.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    space = params.get("space", "lp:1:independent")
    universe = IndexUniverse(n_max)
    rng = _generator(seed, kind)
    if kind == "identity":
        return OmegaOperator.identity(n_max, "rational")
    if kind == "diagonal":
        raw = params.get("values", DEFAULT_DIAGONAL_VALUES)
        floats = any(isinstance(v, float) for v in raw)
        values = [float(v) for v in raw] if floats else [as_fraction(v) for v in raw]
        picks = rng.integers(0, len(values), len(universe))
        return OmegaOperator.diagonal([values[i] for i in picks], n_max,
                                      "float" if floats else "rational")
    if kind == "multiplier":
        density = float(params.get("density", 0.3))
        pattern: dict[OmegaIndex, int] = {}
        for index in universe.indices:
            interval = index.interval
            inherited = (interval.level > 0
                         and pattern[OmegaIndex(index.component, interval.parent())] == 0)
            pattern[index] = 0 if inherited or rng.random() < density else 1
        return multiplier_zero_one(pattern, n_max, "rational")
    if kind == "random":
        gamma = float(params.get("gamma", 1.0))
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        matrix = rng.standard_normal((len(universe), len(universe)))
        return _scaled_to(matrix, n_max, gamma, space)
    eps = float(params.get("eps", 0.05))
    if eps < 0:
        raise ValueError("eps must be non-negative")
    noise = _scaled_to(rng.standard_normal((len(universe), len(universe))), n_max, eps, space) \
        if eps > 0 else OmegaOperator.zeros(n_max, mode="float")
    return OmegaOperator.identity(n_max, "float") + noise


# files -----------------------------------------------------------------------------

def write_json(data, path: str | Path) -> None:
    text = json.dumps(data, sort_keys=True, indent=1, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def save_operator(op: OmegaOperator, path: str | Path, meta: Mapping | None = None) -> str:
    """Write an operator file and return its digest."""
    data = op.to_json()
    if meta:
        data["meta"] = dict(meta)
    write_json(data, path)
    return op.digest()


def load_operator(path: str | Path) -> OmegaOperator:
    return OmegaOperator.from_json(read_json(path))


def load_vector(path: str | Path):
    """Read an :class:`OmegaCoefficients` file or, with a ``depth`` key, Haar coefficients."""
    data = read_json(path)
    if "depth" in data:
        return HaarCoefficients.from_json(data)
    return OmegaCoefficients.from_json(data)


__all__ = ["KINDS", "generate_operator", "save_operator", "load_operator", "load_vector",
           "read_json", "write_json"]
