"""Dyadic intervals, their integer enumeration, and truncated index universes.

A dyadic interval ``[i/2^n, (i+1)/2^n)`` is encoded by ``(level=n, position=i)``
and enumerated as ``iota = 2^n + i``.  The distinguished :data:`ROOT` stands for
the constant function and enumerates to ``0``.  Indices of the independent sum
are pairs ``(component, interval)`` ordered first by component and then by
``iota``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

from .exceptions import LevelOverflowError

MAX_LEVEL = 62


@dataclass(frozen=True)
class DyadicInterval:
    """The interval ``[position / 2^level, (position + 1) / 2^level)``.

    ``level == -1`` is reserved for :data:`ROOT`.
    """

    level: int
    position: int

    def __post_init__(self):
        if self.level == -1:
            if self.position != 0:
                raise ValueError("the root carries position 0")
            return
        if self.level < 0:
            raise ValueError(f"negative level {self.level}")
        if self.level > MAX_LEVEL:
            raise LevelOverflowError(f"level {self.level} exceeds the cap {MAX_LEVEL}")
        if not 0 <= self.position < (1 << self.level):
            raise ValueError(f"position {self.position} out of range at level {self.level}")

    @property
    def is_root(self) -> bool:
        return self.level == -1

    @property
    def iota(self) -> int:
        return iota(self)

    @property
    def measure(self) -> Fraction:
        if self.is_root:
            return Fraction(1)
        return Fraction(1, 1 << self.level)

    @property
    def left(self) -> Fraction:
        return Fraction(self.position, 1 << max(self.level, 0))

    @property
    def right(self) -> Fraction:
        return Fraction(self.position + 1, 1 << max(self.level, 0))

    def halves(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return halves(self)

    def parent(self) -> "DyadicInterval":
        if self.is_root or self.level == 0:
            raise ValueError("the unit interval has no dyadic parent")
        return DyadicInterval(self.level - 1, self.position >> 1)

    def ancestor(self, level: int) -> "DyadicInterval":
        """The unique interval at ``level`` containing this one."""
        if not 0 <= level <= self.level:
            raise ValueError(f"no ancestor at level {level} for {self}")
        return DyadicInterval(level, self.position >> (self.level - level))

    def contains(self, other: "DyadicInterval") -> bool:
        """Set inclusion ``other ⊆ self``."""
        if self.is_root:
            return True
        if other.is_root or other.level < self.level:
            return False
        return other.position >> (other.level - self.level) == self.position

    def descendants(self, level: int) -> range:
        """Positions of the intervals at ``level`` contained in this one."""
        if level < self.level:
            raise ValueError("descendants must lie at a finer level")
        shift = level - max(self.level, 0)
        start = self.position << shift
        return range(start, start + (1 << shift))

    def cells(self, resolution: int) -> range:
        """Grid cells of width ``2^-resolution`` covered by this interval."""
        if self.is_root:
            return range(1 << resolution)
        return self.descendants(resolution)

    def is_left_child(self) -> bool:
        return self.position % 2 == 0

    def __lt__(self, other: "DyadicInterval") -> bool:
        return iota(self) < iota(other)

    def __repr__(self) -> str:
        if self.is_root:
            return "ROOT"
        return f"[{self.left},{self.right})"


ROOT = DyadicInterval(-1, 0)
UNIT = DyadicInterval(0, 0)


def iota(interval: DyadicInterval) -> int:
    """Enumerate dyadic intervals by ``2^level + position``; the root maps to 0."""
    if interval.is_root:
        return 0
    return (1 << interval.level) + interval.position


def from_iota(value: int) -> DyadicInterval:
    """Inverse of :func:`iota`."""
    if value < 0:
        raise ValueError(f"negative enumeration value {value}")
    if value == 0:
        return ROOT
    level = value.bit_length() - 1
    return DyadicInterval(level, value - (1 << level))


def halves(interval: DyadicInterval) -> tuple[DyadicInterval, DyadicInterval]:
    """Return ``(left half, right half)`` of ``interval``."""
    if interval.is_root:
        raise ValueError("the root has no halves; use UNIT")
    if interval.level >= MAX_LEVEL:
        raise LevelOverflowError(f"halving level {interval.level} exceeds the cap {MAX_LEVEL}")
    level = interval.level + 1
    return (DyadicInterval(level, 2 * interval.position),
            DyadicInterval(level, 2 * interval.position + 1))


def intervals_at_level(level: int) -> list[DyadicInterval]:
    return [DyadicInterval(level, i) for i in range(1 << level)]


def intervals_up_to(depth: int) -> list[DyadicInterval]:
    """All intervals of level at most ``depth``, in ``iota`` order."""
    return [from_iota(k) for k in range(1, 1 << (depth + 1))]


@dataclass(frozen=True)
class OmegaIndex:
    """An index ``(component, interval)`` of the independent sum."""

    component: int
    interval: DyadicInterval

    def __post_init__(self):
        if self.component < 0:
            raise ValueError("component must be non-negative")
        if self.interval.is_root:
            raise ValueError("the root is not an index of the independent sum")
        if self.interval.level > self.component:
            raise ValueError(
                f"interval level {self.interval.level} exceeds component {self.component}")

    @property
    def key(self) -> tuple[int, int]:
        return (self.component, iota(self.interval))

    def __lt__(self, other: "OmegaIndex") -> bool:
        return self.key < other.key

    def to_json(self) -> list[int]:
        return [self.component, iota(self.interval)]

    @classmethod
    def from_json(cls, data) -> "OmegaIndex":
        component, value = data
        return cls(int(component), from_iota(int(value)))

    def label(self) -> str:
        return f"{self.component}:{iota(self.interval)}"

    @classmethod
    def from_label(cls, text: str) -> "OmegaIndex":
        component, value = text.split(":")
        return cls(int(component), from_iota(int(value)))

    def __repr__(self) -> str:
        return f"({self.component},{self.interval!r})"


def omega_compare(a: OmegaIndex, b: OmegaIndex) -> int:
    """Three-way comparison in the component-then-iota order: -1, 0 or 1."""
    ka, kb = a.key, b.key
    return (ka > kb) - (ka < kb)


def component_size(n: int) -> int:
    """Number of intervals of level at most ``n``."""
    return (1 << (n + 1)) - 1


def component_offset(n: int) -> int:
    """Position of the first index of component ``n`` in any universe."""
    return sum(component_size(k) for k in range(n))


class IndexUniverse:
    """All indices with component at most ``n_max``, sorted.

    The position of ``(n, I)`` is ``component_offset(n) + iota(I) - 1``, so the
    universe of a smaller truncation is always a prefix of a larger one.
    """

    def __init__(self, n_max: int):
        if n_max < 0:
            raise ValueError("n_max must be non-negative")
        if n_max >= MAX_LEVEL:
            raise LevelOverflowError(f"n_max {n_max} exceeds the cap")
        self.n_max = int(n_max)
        self._size = component_offset(self.n_max + 1)

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[OmegaIndex]:
        for n in range(self.n_max + 1):
            for interval in intervals_up_to(n):
                yield OmegaIndex(n, interval)

    def __getitem__(self, position: int) -> OmegaIndex:
        if position < 0:
            position += self._size
        if not 0 <= position < self._size:
            raise IndexError(position)
        n = 0
        while position >= component_size(n):
            position -= component_size(n)
            n += 1
        return OmegaIndex(n, from_iota(position + 1))

    def __eq__(self, other) -> bool:
        return isinstance(other, IndexUniverse) and other.n_max == self.n_max

    def __hash__(self) -> int:
        return hash(("IndexUniverse", self.n_max))

    def __repr__(self) -> str:
        return f"IndexUniverse(n_max={self.n_max})"

    @property
    def indices(self) -> list[OmegaIndex]:
        return _universe_list(self.n_max)

    def position(self, index: OmegaIndex | tuple[int, DyadicInterval]) -> int:
        if isinstance(index, tuple):
            index = OmegaIndex(*index)
        if index.component > self.n_max:
            raise KeyError(f"{index!r} is outside {self!r}")
        return component_offset(index.component) + iota(index.interval) - 1

    def component_slice(self, n: int) -> slice:
        start = component_offset(n)
        return slice(start, start + component_size(n))

    def __contains__(self, index: OmegaIndex) -> bool:
        return isinstance(index, OmegaIndex) and index.component <= self.n_max

    def measures(self) -> list[Fraction]:
        return [index.interval.measure for index in self.indices]

    def levels(self) -> list[int]:
        return [index.interval.level for index in self.indices]

    def components(self) -> list[int]:
        return [index.component for index in self.indices]


@lru_cache(maxsize=16)
def _universe_list(n_max: int) -> list[OmegaIndex]:
    return list(IndexUniverse(n_max).__iter__())


def universe(n_max: int) -> IndexUniverse:
    return IndexUniverse(n_max)
