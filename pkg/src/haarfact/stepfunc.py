"""Dyadic step functions and the Haar transform on a uniform grid.

A :class:`StepFunction` of resolution ``M`` stores ``2^M`` values, value ``k``
living on ``[k/2^M, (k+1)/2^M)``.  Values are either exact
:class:`fractions.Fraction` objects (``mode="rational"``) or ``float64``
(``mode="float"``); the two are never mixed implicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational, Real
from typing import Iterable, Mapping

import numpy as np

from .dyadic import ROOT, DyadicInterval, from_iota, iota
from .exceptions import ModeMismatchError, ResolutionError, SpanError

DEFAULT_MAX_RESOLUTION = 16
MODES = ("rational", "float")


def check_resolution(resolution: int, max_resolution: int | None = None) -> int:
    cap = DEFAULT_MAX_RESOLUTION if max_resolution is None else max_resolution
    resolution = int(resolution)
    if resolution < 0:
        raise ResolutionError(f"negative resolution {resolution}")
    if resolution > cap:
        raise ResolutionError(f"resolution {resolution} exceeds the cap {cap}")
    return resolution


def as_fraction(value) -> Fraction:
    """Convert an int, Fraction, ``"p/q"`` string or float to an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (bool, np.bool_)):
        return Fraction(int(value))
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    raise TypeError(f"cannot convert {value!r} to a rational")


def rational_array(values: Iterable) -> np.ndarray:
    items = [as_fraction(v) for v in values]
    out = np.empty(len(items), dtype=object)
    out[:] = items
    return out


def infer_mode(values) -> str:
    arr = np.asarray(values)
    if arr.dtype == object:
        return "float" if any(isinstance(v, float) for v in arr.flat) else "rational"
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == np.bool_:
        return "rational"
    return "float"


def coerce_values(values, mode: str) -> np.ndarray:
    if mode == "rational":
        arr = np.asarray(values, dtype=object).ravel()
        return rational_array(arr)
    if mode == "float":
        arr = np.asarray(values)
        if arr.dtype == object:
            arr = np.array([float(v) for v in arr.ravel()], dtype=np.float64)
        return np.ascontiguousarray(arr, dtype=np.float64).ravel()
    raise ValueError(f"unknown mode {mode!r}")


class StepFunction:
    """A function on ``[0,1)`` constant on the cells of the ``2^-M`` grid."""

    __slots__ = ("resolution", "values", "mode")

    def __init__(self, values, mode: str | None = None, *, max_resolution: int | None = None):
        mode = infer_mode(values) if mode is None else mode
        arr = coerce_values(values, mode)
        size = arr.shape[0]
        if size == 0 or size & (size - 1):
            raise ResolutionError(f"grid length {size} is not a power of two")
        self.resolution = check_resolution(size.bit_length() - 1, max_resolution)
        self.values = arr
        self.mode = mode

    @classmethod
    def _wrap(cls, values: np.ndarray, mode: str) -> "StepFunction":
        obj = cls.__new__(cls)
        obj.values = values
        obj.mode = mode
        obj.resolution = values.shape[0].bit_length() - 1
        return obj

    @classmethod
    def zeros(cls, resolution: int, mode: str = "rational") -> "StepFunction":
        resolution = check_resolution(resolution)
        if mode == "rational":
            return cls._wrap(rational_array([0] * (1 << resolution)), mode)
        return cls._wrap(np.zeros(1 << resolution), "float")

    @classmethod
    def constant(cls, value, resolution: int = 0, mode: str = "rational") -> "StepFunction":
        resolution = check_resolution(resolution)
        return cls([value] * (1 << resolution), mode)

    @classmethod
    def indicator(cls, intervals: DyadicInterval | Iterable[DyadicInterval], resolution: int,
                  mode: str = "rational") -> "StepFunction":
        if isinstance(intervals, DyadicInterval):
            intervals = [intervals]
        resolution = check_resolution(resolution)
        mask = np.zeros(1 << resolution, dtype=np.int64)
        for interval in intervals:
            if interval.level > resolution:
                raise ResolutionError(f"{interval!r} is finer than resolution {resolution}")
            cells = interval.cells(resolution)
            mask[cells.start:cells.stop] = 1
        return cls(mask, mode)

    # conversions ---------------------------------------------------------
    def to_float(self) -> "StepFunction":
        if self.mode == "float":
            return self
        return StepFunction._wrap(np.array([float(v) for v in self.values]), "float")

    def to_rational(self) -> "StepFunction":
        if self.mode == "rational":
            return self
        return StepFunction._wrap(rational_array(self.values.tolist()), "rational")

    def as_float_array(self) -> np.ndarray:
        return self.to_float().values

    def refine(self, resolution: int) -> "StepFunction":
        """Re-express on a finer grid."""
        resolution = check_resolution(resolution)
        if resolution < self.resolution:
            raise ResolutionError("refinement cannot lower the resolution")
        if resolution == self.resolution:
            return self
        return StepFunction._wrap(np.repeat(self.values, 1 << (resolution - self.resolution)),
                                  self.mode)

    # arithmetic ----------------------------------------------------------
    def _align(self, other: "StepFunction") -> tuple[np.ndarray, np.ndarray]:
        if other.mode != self.mode:
            raise ModeMismatchError(f"cannot combine {self.mode} with {other.mode}")
        resolution = max(self.resolution, other.resolution)
        return self.refine(resolution).values, other.refine(resolution).values

    def _scalar(self, value):
        if self.mode == "rational":
            if isinstance(value, float):
                raise ModeMismatchError("float scalar applied to a rational function")
            return as_fraction(value)
        return float(value)

    def __add__(self, other):
        if isinstance(other, StepFunction):
            a, b = self._align(other)
            return StepFunction._wrap(a + b, self.mode)
        return StepFunction._wrap(self.values + self._scalar(other), self.mode)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, StepFunction):
            a, b = self._align(other)
            return StepFunction._wrap(a - b, self.mode)
        return StepFunction._wrap(self.values - self._scalar(other), self.mode)

    def __neg__(self):
        return StepFunction._wrap(-self.values, self.mode)

    def __mul__(self, other):
        if isinstance(other, StepFunction):
            a, b = self._align(other)
            return StepFunction._wrap(a * b, self.mode)
        if isinstance(other, Real) or isinstance(other, Fraction):
            return StepFunction._wrap(self.values * self._scalar(other), self.mode)
        return NotImplemented

    __rmul__ = __mul__

    def __abs__(self):
        return StepFunction._wrap(np.abs(self.values), self.mode)

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepFunction) or other.mode != self.mode:
            return False
        a, b = self._align(other)
        return bool(np.all(a == b))

    def __hash__(self):
        return hash((self.resolution, self.mode, tuple(self.values.tolist())))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:
        shown = ", ".join(str(v) for v in self.values[:8].tolist())
        more = ", ..." if len(self) > 8 else ""
        return f"StepFunction(M={self.resolution}, {self.mode}, [{shown}{more}])"

    # JSON ----------------------------------------------------------------
    def to_json(self) -> dict:
        if self.mode == "rational":
            values = [str(v) for v in self.values.tolist()]
        else:
            values = [float(v) for v in self.values.tolist()]
        return {"M": self.resolution, "mode": self.mode, "values": values}

    @classmethod
    def from_json(cls, data: Mapping) -> "StepFunction":
        mode = data.get("mode", "float")
        values = data["values"]
        if len(values) != 1 << int(data["M"]):
            raise ResolutionError("value count does not match M")
        return cls(values, mode)


def haar_function(interval: DyadicInterval, resolution: int, mode: str = "rational") -> StepFunction:
    """``χ_{left half} - χ_{right half}``; the root gives the constant one."""
    resolution = check_resolution(resolution)
    values = np.zeros(1 << resolution, dtype=np.int64)
    if interval.is_root:
        values[:] = 1
    else:
        if interval.level >= resolution:
            raise ResolutionError(
                f"resolution {resolution} cannot resolve the halves of {interval!r}")
        cells = interval.cells(resolution)
        mid = (cells.start + cells.stop) // 2
        values[cells.start:mid] = 1
        values[mid:cells.stop] = -1
    return StepFunction(values, mode)


def rademacher(k: int, resolution: int, mode: str = "rational") -> StepFunction:
    """The sum of all Haar functions at level ``k``."""
    resolution = check_resolution(resolution)
    if k >= resolution:
        raise ResolutionError(f"resolution {resolution} cannot resolve level {k}")
    cells = np.arange(1 << resolution)
    bits = (cells >> (resolution - 1 - k)) & 1
    return StepFunction(1 - 2 * bits, mode)


@dataclass
class HaarCoefficients:
    """Sparse Haar expansion: interval -> coefficient, optionally with the root."""

    coefficients: dict = field(default_factory=dict)
    depth: int | None = None
    include_root: bool = False
    mode: str = "rational"

    def __post_init__(self):
        coefficients = {}
        deepest = -1
        for interval, value in dict(self.coefficients).items():
            if interval.is_root and not self.include_root:
                raise SpanError("root coefficient given without include_root")
            coefficients[interval] = as_fraction(value) if self.mode == "rational" else float(value)
            deepest = max(deepest, interval.level)
        if self.depth is None:
            self.depth = max(deepest, 0)
        elif deepest > self.depth:
            raise ValueError(f"coefficient at level {deepest} beyond depth {self.depth}")
        self.coefficients = dict(sorted(coefficients.items(), key=lambda kv: iota(kv[0])))

    def __getitem__(self, interval: DyadicInterval):
        zero = Fraction(0) if self.mode == "rational" else 0.0
        return self.coefficients.get(interval, zero)

    def __len__(self) -> int:
        return len(self.coefficients)

    def items(self):
        return self.coefficients.items()

    def nonzero(self) -> dict:
        return {k: v for k, v in self.coefficients.items() if v != 0}

    def __eq__(self, other) -> bool:
        if not isinstance(other, HaarCoefficients):
            return NotImplemented
        return self.nonzero() == other.nonzero()

    def to_json(self) -> dict:
        encode = str if self.mode == "rational" else float
        return {"depth": self.depth, "mode": self.mode, "include_root": self.include_root,
                "coefficients": {str(iota(k)): encode(v) for k, v in self.coefficients.items()}}

    @classmethod
    def from_json(cls, data: Mapping) -> "HaarCoefficients":
        mode = data.get("mode", "float")
        coefficients = {from_iota(int(k)): v for k, v in data["coefficients"].items()}
        if mode == "float":
            coefficients = {k: float(v) for k, v in coefficients.items()}
        return cls(coefficients, data.get("depth"), bool(data.get("include_root", False)), mode)


def haar_analyze(f: StepFunction, include_root: bool = True) -> HaarCoefficients:
    """Haar coefficients ``<h_I, f>/|I|`` of ``f`` (and its mean on the root)."""
    averages = f.values
    coefficients: dict[DyadicInterval, object] = {}
    for level in range(f.resolution - 1, -1, -1):
        left, right = averages[0::2], averages[1::2]
        details = (left - right) / 2
        averages = (left + right) / 2
        for position, value in enumerate(details.tolist()):
            if value != 0:
                coefficients[DyadicInterval(level, position)] = value
    mean = averages[0]
    if mean != 0:
        if not include_root:
            raise SpanError("function has nonzero mean, so it is outside the Haar span")
        coefficients[ROOT] = mean
    return HaarCoefficients(coefficients, depth=max(f.resolution - 1, 0),
                            include_root=include_root, mode=f.mode)


def haar_synthesize(c: HaarCoefficients, resolution: int) -> StepFunction:
    """Evaluate ``sum c_I h_I`` on the ``2^-resolution`` grid."""
    resolution = check_resolution(resolution)
    out = StepFunction.zeros(resolution, c.mode).values.copy()
    for interval, value in c.items():
        if value == 0:
            continue
        if interval.is_root:
            out += value
            continue
        if interval.level >= resolution:
            raise ResolutionError(f"resolution {resolution} cannot resolve {interval!r}")
        cells = interval.cells(resolution)
        mid = (cells.start + cells.stop) // 2
        out[cells.start:mid] += value
        out[mid:cells.stop] -= value
    return StepFunction._wrap(out, c.mode)


def pairing(f: StepFunction, g: StepFunction):
    """``∫ f g`` over ``[0,1)``."""
    a, b = f._align(g)
    if f.mode == "rational":
        total = sum((x * y for x, y in zip(a.tolist(), b.tolist())), Fraction(0))
        return total / len(a)
    return float(np.sum(a * b)) / len(a)


def distribution(f: StepFunction) -> list[tuple[object, Fraction]]:
    """Sorted ``(value, measure)`` pairs of the distribution of ``f``."""
    counts: dict = {}
    for value in f.values.tolist():
        counts[value] = counts.get(value, 0) + 1
    size = len(f)
    return [(value, Fraction(count, size)) for value, count in sorted(counts.items())]


def support_measure(f: StepFunction) -> Fraction:
    return Fraction(int(np.count_nonzero(f.values != 0)), len(f))


def level_set_measure(f: StepFunction, value) -> Fraction:
    return Fraction(int(np.count_nonzero(f.values == value)), len(f))
