"""Dense coefficient vectors and matrices over dyadic index sets.

Two numeric modes are supported throughout: ``"rational"`` (object arrays of
:class:`fractions.Fraction`, exact) and ``"float"`` (``float64``).  Matrices
are stored column-major in the sense of the basis: column ``j`` holds the
coefficients of the image of basis vector ``j``.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .dyadic import DyadicInterval, IndexUniverse, OmegaIndex, from_iota, intervals_up_to, iota
from .exceptions import ModeMismatchError
from .stepfunc import as_fraction, rational_array

ZERO = Fraction(0)
ONE = Fraction(1)


# scalar helpers --------------------------------------------------------------

def encode_scalar(value, mode: str):
    """JSON form of a scalar: ``"p/q"`` strings for rationals, numbers for floats."""
    if mode == "rational":
        return str(as_fraction(value))
    return float(value)


def decode_scalar(value, mode: str):
    if mode == "rational":
        return as_fraction(value)
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


def coerce_matrix(matrix, mode: str) -> np.ndarray:
    arr = np.asarray(matrix, dtype=object if mode == "rational" else None)
    if arr.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    if mode == "rational":
        out = np.empty(arr.shape, dtype=object)
        flat = [as_fraction(v) for v in arr.ravel().tolist()]
        out.ravel()[:] = flat
        return out
    if mode == "float":
        if arr.dtype == object:
            arr = np.array([[float(v) for v in row] for row in arr.tolist()], dtype=np.float64)
        return np.array(arr, dtype=np.float64)
    raise ValueError(f"unknown mode {mode!r}")


def matrix_mode(matrix: np.ndarray) -> str:
    if matrix.dtype == object:
        return "float" if any(isinstance(v, float) for v in matrix.ravel().tolist()) else "rational"
    if np.issubdtype(matrix.dtype, np.integer):
        return "rational"
    return "float"


def to_float_array(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == object:
        return np.array([float(v) for v in arr.ravel().tolist()], dtype=np.float64).reshape(arr.shape)
    return np.asarray(arr, dtype=np.float64)


def to_rational_array(arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape, dtype=object)
    out.ravel()[:] = [as_fraction(v) for v in arr.ravel().tolist()]
    return out


def rational_zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(ZERO)
    return out


def rational_identity(size: int) -> np.ndarray:
    out = rational_zeros((size, size))
    for i in range(size):
        out[i, i] = ONE
    return out


def rational_inverse(matrix: np.ndarray) -> np.ndarray:
    """Exact inverse by Gauss-Jordan elimination over the rationals."""
    size = matrix.shape[0]
    if matrix.shape != (size, size):
        raise ValueError("only square matrices can be inverted")
    work = [[as_fraction(v) for v in row] + [ONE if i == j else ZERO for j in range(size)]
            for i, row in enumerate(matrix.tolist())]
    for col in range(size):
        pivot = next((r for r in range(col, size) if work[r][col] != 0), None)
        if pivot is None:
            raise np.linalg.LinAlgError("matrix is singular")
        work[col], work[pivot] = work[pivot], work[col]
        lead = work[col][col]
        row = [v / lead for v in work[col]]
        work[col] = row
        for r in range(size):
            if r != col and work[r][col] != 0:
                factor = work[r][col]
                work[r] = [a - factor * b for a, b in zip(work[r], row)]
    out = np.empty((size, size), dtype=object)
    for i in range(size):
        out[i, :] = work[i][size:]
    return out


def invert(matrix: np.ndarray, mode: str) -> np.ndarray:
    if mode == "rational":
        return rational_inverse(matrix)
    return np.linalg.inv(np.asarray(matrix, dtype=np.float64))


# coefficient vectors -----------------------------------------------------------

class OmegaCoefficients:
    """Coefficients ``x = sum a_I^n h_I^n`` over a truncated index universe."""

    __slots__ = ("universe", "values", "mode")

    def __init__(self, values, n_max: int | IndexUniverse, mode: str | None = None):
        self.universe = n_max if isinstance(n_max, IndexUniverse) else IndexUniverse(n_max)
        arr = np.asarray(values, dtype=object if mode == "rational" else None).ravel()
        if mode is None:
            mode = matrix_mode(arr.reshape(1, -1)) if arr.size else "rational"
        if arr.shape != (len(self.universe),):
            raise ValueError(f"expected {len(self.universe)} coefficients, got {arr.shape}")
        self.values = rational_array(arr.tolist()) if mode == "rational" else to_float_array(arr)
        self.mode = mode

    @classmethod
    def _wrap(cls, values: np.ndarray, universe: IndexUniverse, mode: str) -> "OmegaCoefficients":
        obj = cls.__new__(cls)
        obj.universe, obj.values, obj.mode = universe, values, mode
        return obj

    @classmethod
    def zeros(cls, n_max: int, mode: str = "rational") -> "OmegaCoefficients":
        universe = IndexUniverse(n_max)
        values = rational_zeros(len(universe)) if mode == "rational" else np.zeros(len(universe))
        return cls._wrap(values, universe, mode)

    @classmethod
    def from_mapping(cls, entries: Mapping[OmegaIndex, object], n_max: int,
                     mode: str = "rational") -> "OmegaCoefficients":
        out = cls.zeros(n_max, mode)
        for index, value in entries.items():
            out.values[out.universe.position(index)] = decode_scalar(value, mode)
        return out

    @classmethod
    def basis_vector(cls, index: OmegaIndex | int, n_max: int, mode: str = "rational"):
        out = cls.zeros(n_max, mode)
        position = index if isinstance(index, int) else out.universe.position(index)
        out.values[position] = ONE if mode == "rational" else 1.0
        return out

    @property
    def n_max(self) -> int:
        return self.universe.n_max

    def __getitem__(self, index: OmegaIndex):
        return self.values[self.universe.position(index)]

    def items(self):
        return zip(self.universe.indices, self.values.tolist())

    def nonzero(self) -> dict[OmegaIndex, object]:
        return {i: v for i, v in self.items() if v != 0}

    def to_float(self) -> "OmegaCoefficients":
        if self.mode == "float":
            return self
        return OmegaCoefficients._wrap(to_float_array(self.values), self.universe, "float")

    def to_rational(self) -> "OmegaCoefficients":
        if self.mode == "rational":
            return self
        return OmegaCoefficients._wrap(to_rational_array(self.values), self.universe, "rational")

    def _check(self, other: "OmegaCoefficients"):
        if other.mode != self.mode:
            raise ModeMismatchError(f"cannot combine {self.mode} with {other.mode}")
        if other.universe != self.universe:
            raise ValueError("coefficient universes differ")

    def __add__(self, other):
        self._check(other)
        return OmegaCoefficients._wrap(self.values + other.values, self.universe, self.mode)

    def __sub__(self, other):
        self._check(other)
        return OmegaCoefficients._wrap(self.values - other.values, self.universe, self.mode)

    def __neg__(self):
        return OmegaCoefficients._wrap(-self.values, self.universe, self.mode)

    def __mul__(self, scalar):
        scalar = as_fraction(scalar) if self.mode == "rational" else float(scalar)
        return OmegaCoefficients._wrap(self.values * scalar, self.universe, self.mode)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, OmegaCoefficients):
            return NotImplemented
        return (other.mode == self.mode and other.universe == self.universe
                and bool(np.all(self.values == other.values)))

    def restrict(self, n_max: int) -> "OmegaCoefficients":
        """Keep the components up to ``n_max`` (a prefix of the universe)."""
        universe = IndexUniverse(n_max)
        return OmegaCoefficients._wrap(self.values[:len(universe)].copy(), universe, self.mode)

    def extend(self, n_max: int) -> "OmegaCoefficients":
        """Pad with zeros to a larger truncation."""
        out = OmegaCoefficients.zeros(n_max, self.mode)
        out.values[:len(self.universe)] = self.values
        return out

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "mode": self.mode,
                "coefficients": {i.label(): encode_scalar(v, self.mode)
                                 for i, v in self.nonzero().items()}}

    @classmethod
    def from_json(cls, data: Mapping) -> "OmegaCoefficients":
        mode = data.get("mode", "float")
        entries = {OmegaIndex.from_label(k): v for k, v in data["coefficients"].items()}
        return cls.from_mapping(entries, int(data["n_max"]), mode)

    def __repr__(self) -> str:
        return f"OmegaCoefficients(n_max={self.n_max}, {self.mode}, {self.nonzero()})"


# matrices ----------------------------------------------------------------------

class _CoefficientMatrix:
    """Shared arithmetic for coefficient matrices."""

    matrix: np.ndarray
    mode: str

    def _like(self, matrix: np.ndarray):
        raise NotImplementedError

    def _compatible(self, other) -> None:
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.mode != self.mode:
            raise ModeMismatchError(f"cannot combine {self.mode} with {other.mode}")
        if other.matrix.shape != self.matrix.shape:
            raise ValueError("operator shapes differ")

    def __add__(self, other):
        self._compatible(other)
        return self._like(self.matrix + other.matrix)

    def __sub__(self, other):
        self._compatible(other)
        return self._like(self.matrix - other.matrix)

    def __neg__(self):
        return self._like(-self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, _CoefficientMatrix):
            return NotImplemented
        scalar = as_fraction(scalar) if self.mode == "rational" else float(scalar)
        return self._like(self.matrix * scalar)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (other.mode == self.mode and other.matrix.shape == self.matrix.shape
                and bool(np.all(self.matrix == other.matrix)))

    __hash__ = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def float_matrix(self) -> np.ndarray:
        return to_float_array(self.matrix)

    def to_float(self):
        return self if self.mode == "float" else self._like_mode(self.float_matrix(), "float")

    def to_rational(self):
        if self.mode == "rational":
            return self
        return self._like_mode(to_rational_array(self.matrix), "rational")

    def is_diagonal(self) -> bool:
        if self.matrix.shape[0] != self.matrix.shape[1]:
            return False
        off = self.matrix.copy()
        for i in range(off.shape[0]):
            off[i, i] = 0
        return not np.any(off != 0)

    def diagonal_values(self) -> np.ndarray:
        return np.array([self.matrix[i, i] for i in range(min(self.matrix.shape))],
                        dtype=self.matrix.dtype)

    def max_abs_entry(self) -> float:
        if self.matrix.size == 0:
            return 0.0
        return float(np.max(np.abs(self.float_matrix())))


class OmegaOperator(_CoefficientMatrix):
    """A linear map between truncations of the independent sum.

    ``matrix[row, col]`` is the coefficient of basis vector ``row`` of the
    codomain in the image of basis vector ``col`` of the domain, so the
    bilinear entry is ``<h_I^n, T h_J^m> = |I| * matrix[(n,I), (m,J)]``.
    """

    __slots__ = ("domain", "codomain", "matrix", "mode")

    def __init__(self, matrix, domain: int | IndexUniverse,
                 codomain: int | IndexUniverse | None = None, mode: str | None = None):
        self.domain = domain if isinstance(domain, IndexUniverse) else IndexUniverse(domain)
        if codomain is None:
            codomain = self.domain
        self.codomain = codomain if isinstance(codomain, IndexUniverse) else IndexUniverse(codomain)
        arr = np.asarray(matrix, dtype=object if mode == "rational" else None)
        mode = matrix_mode(arr) if mode is None else mode
        self.matrix = coerce_matrix(arr, mode)
        self.mode = mode
        expected = (len(self.codomain), len(self.domain))
        if self.matrix.shape != expected:
            raise ValueError(f"matrix shape {self.matrix.shape} != {expected}")

    def _like(self, matrix: np.ndarray) -> "OmegaOperator":
        return self._like_mode(matrix, self.mode)

    def _like_mode(self, matrix: np.ndarray, mode: str) -> "OmegaOperator":
        obj = OmegaOperator.__new__(OmegaOperator)
        obj.domain, obj.codomain, obj.matrix, obj.mode = self.domain, self.codomain, matrix, mode
        return obj

    @classmethod
    def _wrap(cls, matrix, domain: IndexUniverse, codomain: IndexUniverse, mode: str):
        obj = cls.__new__(cls)
        obj.domain, obj.codomain, obj.matrix, obj.mode = domain, codomain, matrix, mode
        return obj

    # constructors --------------------------------------------------------
    @classmethod
    def identity(cls, n_max: int, mode: str = "rational") -> "OmegaOperator":
        universe = IndexUniverse(n_max)
        size = len(universe)
        matrix = rational_identity(size) if mode == "rational" else np.eye(size)
        return cls._wrap(matrix, universe, universe, mode)

    @classmethod
    def zeros(cls, domain: int, codomain: int | None = None, mode: str = "rational"):
        dom = IndexUniverse(domain)
        cod = dom if codomain is None else IndexUniverse(codomain)
        shape = (len(cod), len(dom))
        matrix = rational_zeros(shape) if mode == "rational" else np.zeros(shape)
        return cls._wrap(matrix, dom, cod, mode)

    @classmethod
    def diagonal(cls, entries, n_max: int, mode: str | None = None) -> "OmegaOperator":
        """Diagonal operator from a mapping ``OmegaIndex -> value`` or a vector."""
        universe = IndexUniverse(n_max)
        if isinstance(entries, Mapping):
            values = [ZERO] * len(universe)
            for index, value in entries.items():
                values[universe.position(index)] = value
        else:
            values = list(entries)
            if len(values) != len(universe):
                raise ValueError(f"expected {len(universe)} diagonal entries")
        if mode is None:
            mode = "float" if any(isinstance(v, float) for v in values) else "rational"
        size = len(universe)
        matrix = rational_zeros((size, size)) if mode == "rational" else np.zeros((size, size))
        for i, value in enumerate(values):
            matrix[i, i] = decode_scalar(value, mode)
        return cls._wrap(matrix, universe, universe, mode)

    # structure -----------------------------------------------------------
    @property
    def is_square(self) -> bool:
        return self.domain == self.codomain

    def entry(self, row: OmegaIndex, col: OmegaIndex):
        """The bilinear entry ``<h_row, T h_col>``."""
        value = self.matrix[self.codomain.position(row), self.domain.position(col)]
        return value * (row.interval.measure if self.mode == "rational"
                        else float(row.interval.measure))

    def coefficient(self, row: OmegaIndex, col: OmegaIndex):
        return self.matrix[self.codomain.position(row), self.domain.position(col)]

    def apply(self, x: OmegaCoefficients) -> OmegaCoefficients:
        if x.mode != self.mode:
            raise ModeMismatchError(f"operator is {self.mode}, vector is {x.mode}")
        if x.universe != self.domain:
            raise ValueError("vector universe differs from the operator domain")
        return OmegaCoefficients._wrap(self.matrix.dot(x.values), self.codomain, self.mode)

    def __matmul__(self, other):
        if isinstance(other, OmegaCoefficients):
            return self.apply(other)
        if not isinstance(other, OmegaOperator):
            return NotImplemented
        if other.mode != self.mode:
            raise ModeMismatchError(f"cannot compose {self.mode} with {other.mode}")
        if other.codomain != self.domain:
            raise ValueError("inner universes of the composition differ")
        return OmegaOperator._wrap(self.matrix.dot(other.matrix), other.domain,
                                   self.codomain, self.mode)

    def _compatible(self, other) -> None:
        super()._compatible(other)
        if other.domain != self.domain or other.codomain != self.codomain:
            raise ValueError("operator universes differ")

    def column(self, col: int) -> OmegaCoefficients:
        return OmegaCoefficients._wrap(self.matrix[:, col].copy(), self.codomain, self.mode)

    # serialization -------------------------------------------------------
    def to_json(self) -> dict:
        columns = {}
        rows = self.codomain.indices
        for j, col_index in enumerate(self.domain.indices):
            column = {rows[i].label(): encode_scalar(self.matrix[i, j], self.mode)
                      for i in np.flatnonzero(self.matrix[:, j] != 0)}
            if column:
                columns[col_index.label()] = column
        out = {"universe": {"n_max": self.domain.n_max}, "mode": self.mode, "columns": columns}
        if not self.is_square:
            out["codomain"] = {"n_max": self.codomain.n_max}
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "OmegaOperator":
        mode = data.get("mode", "float")
        domain = IndexUniverse(int(data["universe"]["n_max"]))
        codomain = IndexUniverse(int(data.get("codomain", data["universe"])["n_max"]))
        shape = (len(codomain), len(domain))
        matrix = rational_zeros(shape) if mode == "rational" else np.zeros(shape)
        for col_label, column in data.get("columns", {}).items():
            j = domain.position(OmegaIndex.from_label(col_label))
            for row_label, value in column.items():
                matrix[codomain.position(OmegaIndex.from_label(row_label)), j] = \
                    decode_scalar(value, mode)
        return cls._wrap(matrix, domain, codomain, mode)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON encoding."""
        return content_digest(self.to_json())

    def __repr__(self) -> str:
        return (f"OmegaOperator(domain n_max={self.domain.n_max}, codomain "
                f"n_max={self.codomain.n_max}, {self.mode})")


class HaarOperator(_CoefficientMatrix):
    """A linear map on the span of ``h_I``, ``I`` of level at most ``depth``.

    Rows and columns are ordered by ``iota``; the bilinear entry is
    ``<h_I, T h_J> = |I| * matrix[iota(I)-1, iota(J)-1]``.
    """

    __slots__ = ("depth", "matrix", "mode")

    def __init__(self, matrix, depth: int, mode: str | None = None):
        arr = np.asarray(matrix, dtype=object if mode == "rational" else None)
        mode = matrix_mode(arr) if mode is None else mode
        self.matrix = coerce_matrix(arr, mode)
        self.mode = mode
        self.depth = int(depth)
        size = (1 << (self.depth + 1)) - 1
        if self.matrix.shape != (size, size):
            raise ValueError(f"expected a {size}x{size} matrix")

    def _like(self, matrix):
        return self._like_mode(matrix, self.mode)

    def _like_mode(self, matrix, mode):
        obj = HaarOperator.__new__(HaarOperator)
        obj.depth, obj.matrix, obj.mode = self.depth, matrix, mode
        return obj

    def _compatible(self, other) -> None:
        super()._compatible(other)
        if other.depth != self.depth:
            raise ValueError("operator depths differ")

    @classmethod
    def identity(cls, depth: int, mode: str = "rational") -> "HaarOperator":
        size = (1 << (depth + 1)) - 1
        return cls(rational_identity(size) if mode == "rational" else np.eye(size), depth, mode)

    @classmethod
    def diagonal(cls, entries, depth: int | None = None, mode: str | None = None):
        if isinstance(entries, Mapping):
            depth = max(k.level for k in entries) if depth is None else depth
            values = [entries.get(k, ZERO) for k in intervals_up_to(depth)]
        else:
            values = list(entries)
            depth = (len(values) + 1).bit_length() - 2 if depth is None else depth
        if mode is None:
            mode = "float" if any(isinstance(v, float) for v in values) else "rational"
        size = len(values)
        matrix = rational_zeros((size, size)) if mode == "rational" else np.zeros((size, size))
        for i, v in enumerate(values):
            matrix[i, i] = decode_scalar(v, mode)
        return cls(matrix, depth, mode)

    @property
    def intervals(self) -> list[DyadicInterval]:
        return intervals_up_to(self.depth)

    def coefficient(self, row: DyadicInterval, col: DyadicInterval):
        return self.matrix[iota(row) - 1, iota(col) - 1]

    def entry(self, row: DyadicInterval, col: DyadicInterval):
        measure = row.measure if self.mode == "rational" else float(row.measure)
        return self.coefficient(row, col) * measure

    def diagonal_entries(self) -> dict[DyadicInterval, object]:
        return {k: self.matrix[i, i] for i, k in enumerate(self.intervals)}

    def quadratic_form(self, coefficients: Mapping[DyadicInterval, object]):
        """``<f, T f>`` for ``f = sum c_K h_K``."""
        keys = list(coefficients)
        rows = [iota(k) - 1 for k in keys]
        total = ZERO if self.mode == "rational" else 0.0
        for a, ka in zip(rows, keys):
            weight = ka.measure if self.mode == "rational" else float(ka.measure)
            for b, kb in zip(rows, keys):
                total += coefficients[ka] * coefficients[kb] * weight * self.matrix[a, b]
        return total

    def __matmul__(self, other):
        if not isinstance(other, HaarOperator):
            return NotImplemented
        self._compatible(other)
        return self._like(self.matrix.dot(other.matrix))

    def to_json(self) -> dict:
        keys = [str(iota(k)) for k in self.intervals]
        columns = {}
        for j, key in enumerate(keys):
            column = {keys[i]: encode_scalar(self.matrix[i, j], self.mode)
                      for i in np.flatnonzero(self.matrix[:, j] != 0)}
            if column:
                columns[key] = column
        return {"depth": self.depth, "mode": self.mode, "columns": columns}

    @classmethod
    def from_json(cls, data: Mapping) -> "HaarOperator":
        mode = data.get("mode", "float")
        depth = int(data["depth"])
        size = (1 << (depth + 1)) - 1
        matrix = rational_zeros((size, size)) if mode == "rational" else np.zeros((size, size))
        for col, column in data.get("columns", {}).items():
            for row, value in column.items():
                matrix[int(row) - 1, int(col) - 1] = decode_scalar(value, mode)
        return cls(matrix, depth, mode)

    def __repr__(self) -> str:
        return f"HaarOperator(depth={self.depth}, {self.mode})"


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def content_digest(data) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def stack_columns(columns: Iterable[np.ndarray], rows: int, mode: str) -> np.ndarray:
    cols = list(columns)
    if not cols:
        return rational_zeros((rows, 0)) if mode == "rational" else np.zeros((rows, 0))
    return np.stack(cols, axis=1)


__all__ = [
    "OmegaCoefficients", "OmegaOperator", "HaarOperator", "invert", "rational_inverse",
    "encode_scalar", "decode_scalar", "content_digest", "canonical_json", "from_iota",
]
