"""Grid model of the truncated independent sum of finite Haar blocks.

Component ``n`` is a copy of the Haar system of depth ``n`` realized as the
faithful system on its own set of grid frequencies ``tau_n``.  Distinct
components use disjoint frequencies, hence are independent on the grid.  The
basis function ``h_I^n`` is the block function of ``I`` in component ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Mapping, Sequence

import numpy as np

from .dyadic import DyadicInterval, IndexUniverse, OmegaIndex, component_offset
from .exceptions import FaithfulSystemError, PartitionError, ResolutionError
from .faithful import FiniteFaithfulSystem, SupportProfile, faithful_from_frequencies, verify_system
from .linalg import HaarOperator, OmegaCoefficients, OmegaOperator, rational_zeros
from .stepfunc import HaarCoefficients, StepFunction, check_resolution


def packed_tau(n_max: int) -> tuple[tuple[int, ...], ...]:
    """Consecutive frequency runs: component ``n`` gets ``T_n, ..., T_n + n``."""
    return tuple(tuple(range(n * (n + 1) // 2, n * (n + 1) // 2 + n + 1))
                 for n in range(n_max + 1))


class OmegaBasis:
    """Frequencies, grid resolution and the pointwise structure of ``h_I^n``.

    Attributes
    ----------
    n_max : int
        Largest component.
    tau : tuple of tuple of int
        Sorted frequency set of each component.
    resolution : int
        Grid resolution ``M``; every frequency is below ``M``.
    universe : IndexUniverse
        The ordered index set.
    """

    def __init__(self, n_max: int, tau: Sequence[Sequence[int]], resolution: int | None = None,
                 max_resolution: int | None = None):
        self.n_max = int(n_max)
        self.tau = tuple(tuple(sorted(int(k) for k in t)) for t in tau)
        if len(self.tau) != self.n_max + 1:
            raise ValueError(f"expected {self.n_max + 1} frequency sets")
        for n, t in enumerate(self.tau):
            if len(set(t)) != n + 1:
                raise ValueError(f"component {n} needs {n + 1} distinct frequencies, got {t}")
        flat = [k for t in self.tau for k in t]
        if len(set(flat)) != len(flat):
            raise ValueError("frequency sets must be pairwise disjoint")
        if min(flat) < 0:
            raise ValueError("frequencies must be non-negative")
        needed = max(flat) + 1
        resolution = needed if resolution is None else int(resolution)
        if resolution < needed:
            raise ResolutionError(f"resolution {resolution} cannot hold frequency {needed - 1}")
        self.resolution = check_resolution(resolution, max_resolution)
        self.universe = IndexUniverse(self.n_max)

    def __repr__(self) -> str:
        return f"OmegaBasis(n_max={self.n_max}, M={self.resolution})"

    @property
    def size(self) -> int:
        return len(self.universe)

    @property
    def points(self) -> int:
        return 1 << self.resolution

    @cached_property
    def systems(self) -> tuple[FiniteFaithfulSystem, ...]:
        return tuple(faithful_from_frequencies(t, self.resolution) for t in self.tau)

    def _bits(self, frequency: int) -> np.ndarray:
        cells = np.arange(self.points, dtype=np.int64)
        return ((cells >> (self.resolution - 1 - frequency)) & 1).astype(np.int64)

    @cached_property
    def _tables(self) -> tuple[np.ndarray, np.ndarray]:
        width = sum(n + 1 for n in range(self.n_max + 1))
        active = np.empty((self.points, width), dtype=np.int32)
        signs = np.empty((self.points, width), dtype=np.int8)
        column = 0
        for n, t in enumerate(self.tau):
            offset = component_offset(n)
            position = np.zeros(self.points, dtype=np.int64)
            for level in range(n + 1):
                bits = self._bits(t[level])
                active[:, column] = offset + (1 << level) + position - 1
                signs[:, column] = 1 - 2 * bits
                position = 2 * position + bits
                column += 1
        active.setflags(write=False)
        signs.setflags(write=False)
        return active, signs

    @property
    def active(self) -> np.ndarray:
        """``active[t, c]``: universe position of the ``c``-th basis function alive at cell ``t``."""
        return self._tables[0]

    @property
    def signs(self) -> np.ndarray:
        """Value (+1/-1) of that basis function at cell ``t``."""
        return self._tables[1]

    def columns_for(self, n_max: int) -> int:
        """Number of leading table columns belonging to components up to ``n_max``."""
        return sum(n + 1 for n in range(n_max + 1))

    def function(self, index: OmegaIndex, mode: str = "rational") -> StepFunction:
        return self.systems[index.component].function(index.interval, self.resolution, mode)

    def atom_labels(self, n: int) -> np.ndarray:
        """Label of the atom of the component-``n`` sigma-algebra containing each cell."""
        label = np.zeros(self.points, dtype=np.int64)
        for frequency in self.tau[n]:
            label = 2 * label + self._bits(frequency)
        return label

    def synthesize(self, x: OmegaCoefficients) -> StepFunction:
        """Pointwise values of ``sum a_I^n h_I^n`` on the grid."""
        if x.n_max > self.n_max:
            raise ValueError("coefficients reach beyond the basis")
        width = self.columns_for(x.n_max)
        active = self.active[:, :width]
        signs = self.signs[:, :width]
        if x.mode == "rational":
            gathered = x.values[active]
            values = (gathered * signs.astype(object)).sum(axis=1)
            return StepFunction._wrap(np.asarray(values, dtype=object), "rational")
        values = np.einsum("pk,pk->p", x.values[active], signs.astype(np.float64))
        return StepFunction._wrap(values, "float")

    def pointwise_terms(self, x: OmegaCoefficients) -> np.ndarray:
        """``(points, k)`` float array of ``a_j * h_j(t)`` for the basis functions alive at ``t``."""
        if x.n_max > self.n_max:
            raise ValueError("coefficients reach beyond the basis")
        width = self.columns_for(x.n_max)
        values = x.to_float().values
        return values[self.active[:, :width]] * self.signs[:, :width]

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "tau": [list(t) for t in self.tau], "M": self.resolution}

    @classmethod
    def from_json(cls, data: Mapping) -> "OmegaBasis":
        return cls(int(data["n_max"]), data["tau"], int(data["M"]))


@lru_cache(maxsize=8)
def _packed(n_max: int, resolution: int | None, max_resolution: int | None) -> OmegaBasis:
    return OmegaBasis(n_max, packed_tau(n_max), resolution, max_resolution)


def build_omega_basis(n_max: int, tau: str | Sequence[Sequence[int]] = "packed",
                      resolution: int | None = None,
                      max_resolution: int | None = None) -> OmegaBasis:
    """Build the grid model; ``tau="packed"`` uses consecutive frequency runs."""
    if isinstance(tau, str):
        if tau != "packed":
            raise ValueError(f"unknown frequency strategy {tau!r}")
        return _packed(int(n_max), resolution, max_resolution)
    return OmegaBasis(n_max, tau, resolution, max_resolution)


def embed_component(x: HaarCoefficients, n: int, n_max: int | None = None) -> OmegaCoefficients:
    """Map ``sum c_I h_I`` to ``sum c_I h_I^n``."""
    n_max = n if n_max is None else n_max
    if n > n_max:
        raise ValueError(f"component {n} is outside n_max={n_max}")
    if x.include_root and x[DyadicInterval(-1, 0)] != 0:
        raise ValueError("the constant function has no image in the independent sum")
    if x.depth > n and any(k.level > n for k, v in x.items() if v != 0):
        raise ValueError(f"coefficients deeper than component {n}")
    out = OmegaCoefficients.zeros(n_max, x.mode)
    for interval, value in x.items():
        if not interval.is_root:
            out.values[out.universe.position(OmegaIndex(n, interval))] = value
    return out


embed_Jn = embed_component


def compress_component(T: OmegaOperator, n: int) -> HaarOperator:
    """The block of ``T`` acting from component ``n`` to component ``n``."""
    if n > T.domain.n_max or n > T.codomain.n_max:
        raise ValueError(f"component {n} is outside the operator's universes")
    rows = T.codomain.component_slice(n)
    cols = T.domain.component_slice(n)
    return HaarOperator(T.matrix[rows, cols].copy(), n, T.mode)


compress_Tn = compress_component


# sigma-algebras ------------------------------------------------------------------

def partition_labels(partition, resolution: int) -> np.ndarray:
    """Canonical label array for a partition of the ``2^resolution`` grid cells.

    ``partition`` is either a label array of that length or a list of atoms,
    each atom a list of cell indices or of dyadic intervals.
    """
    points = 1 << resolution
    if isinstance(partition, np.ndarray) and partition.ndim == 1 and len(partition) == points \
            and partition.dtype != object:
        raw = partition.astype(np.int64)
    else:
        raw = np.full(points, -1, dtype=np.int64)
        for label, atom in enumerate(partition):
            cells = []
            for item in atom:
                if isinstance(item, DyadicInterval):
                    if item.level > resolution:
                        raise PartitionError(f"{item!r} is finer than the grid")
                    r = item.cells(resolution)
                    cells.extend(range(r.start, r.stop))
                else:
                    cells.append(int(item))
            cells = np.asarray(cells, dtype=np.int64)
            if cells.size == 0:
                raise PartitionError("empty atom")
            if cells.min() < 0 or cells.max() >= points:
                raise PartitionError("atom cell outside the grid")
            if np.any(raw[cells] != -1) or len(np.unique(cells)) != len(cells):
                raise PartitionError("atoms overlap")
            raw[cells] = label
        if np.any(raw < 0):
            raise PartitionError("atoms do not cover [0,1)")
    _, canonical = np.unique(raw, return_inverse=True)
    return canonical.astype(np.int64)


def atoms_of(labels: np.ndarray) -> list[np.ndarray]:
    """Atoms as sorted cell-index arrays, ordered by their first cell."""
    order = np.argsort(labels, kind="stable")
    groups = np.split(order, np.flatnonzero(np.diff(labels[order])) + 1)
    return sorted((np.sort(g) for g in groups), key=lambda g: g[0])


def _average_on(values: np.ndarray, labels: np.ndarray, mode: str) -> np.ndarray:
    if mode == "float":
        sums = np.bincount(labels, weights=values)
        counts = np.bincount(labels)
        return (sums / counts)[labels]
    count = int(labels.max()) + 1
    sums = [Fraction(0)] * count
    sizes = [0] * count
    for label, value in zip(labels.tolist(), values.tolist()):
        sums[label] += value
        sizes[label] += 1
    means = [s / c for s, c in zip(sums, sizes)]
    out = np.empty(len(labels), dtype=object)
    out[:] = [means[label] for label in labels.tolist()]
    return out


def conditional_expectation(f: StepFunction, partition) -> StepFunction:
    """Average ``f`` over each atom of a finite partition of the grid."""
    labels = partition_labels(partition, f.resolution)
    return StepFunction._wrap(_average_on(f.values, labels, f.mode), f.mode)


def partition_from_functions(functions: Sequence[StepFunction]) -> np.ndarray:
    """Atoms of the sigma-algebra generated by finitely many step functions."""
    resolution = max(g.resolution for g in functions)
    rows = [np.asarray([str(v) for v in g.refine(resolution).values.tolist()]) for g in functions]
    stacked = np.stack(rows, axis=1)
    _, labels = np.unique(stacked, axis=0, return_inverse=True)
    return labels.ravel().astype(np.int64)


def join_labels(*labelings: np.ndarray) -> np.ndarray:
    stacked = np.stack(labelings, axis=1)
    _, labels = np.unique(stacked, axis=0, return_inverse=True)
    return labels.ravel().astype(np.int64)


def check_component_measurable(labels: np.ndarray, basis: OmegaBasis, n: int) -> None:
    """Raise unless every atom of ``labels`` is a union of component-``n`` atoms."""
    component = basis.atom_labels(n)
    reference = np.full(int(component.max()) + 1, -1, dtype=np.int64)
    for atom, label in zip(component.tolist(), labels.tolist()):
        if reference[atom] == -1:
            reference[atom] = label
        elif reference[atom] != label:
            raise PartitionError(f"sigma-algebra {n} is not contained in component {n}")


def component_condexp_sum(x: OmegaCoefficients, algebras: Sequence, basis: OmegaBasis,
                          check: bool = True) -> StepFunction:
    """Conditional expectation of ``x`` onto the join of component sub-sigma-algebras.

    ``algebras[n]`` is a partition (see :func:`partition_labels`) measurable
    with respect to component ``n``.  The result equals the sum of the
    individual conditional expectations; with ``check`` this is asserted
    (exactly for rational coefficients).
    """
    f = basis.synthesize(x)
    labelings = []
    for n, partition in enumerate(algebras):
        labels = partition_labels(partition, basis.resolution)
        check_component_measurable(labels, basis, n)
        labelings.append(labels)
    joint = join_labels(*labelings) if labelings else np.zeros(basis.points, dtype=np.int64)
    result = StepFunction._wrap(_average_on(f.values, joint, f.mode), f.mode)
    if check:
        pieces = [_average_on(f.values, labels, f.mode) for labels in labelings]
        total = sum(pieces[1:], pieces[0]) if pieces else np.zeros(basis.points)
        if f.mode == "rational":
            ok = bool(np.all(total == result.values)) if pieces else bool(np.all(result.values == 0))
        else:
            ok = bool(np.allclose(total, result.values, rtol=1e-12, atol=1e-12))
        if not ok:
            raise AssertionError("conditional expectation of the join differs from the sum")
    return result


# systems in the independent sum ----------------------------------------------------

@dataclass
class OmegaFaithfulSystem:
    """Per-component systems of depth ``n`` placed in components ``N(n)``."""

    systems: tuple[FiniteFaithfulSystem, ...]
    components: tuple[int, ...]
    n_max: int
    profiles: tuple[SupportProfile, ...] = field(init=False)

    def __post_init__(self):
        self.systems = tuple(self.systems)
        self.components = tuple(int(c) for c in self.components)
        self.profiles = tuple(s.profile() for s in self.systems)

    @property
    def target_depth(self) -> int:
        return len(self.systems) - 1

    @property
    def is_faithful(self) -> bool:
        return all(s.is_faithful for s in self.systems)

    @property
    def target_universe(self) -> IndexUniverse:
        return IndexUniverse(self.target_depth)

    def block(self, index: OmegaIndex) -> dict[OmegaIndex, int]:
        """Coefficients of ``b~_I^n`` in the ambient basis."""
        system = self.systems[index.component]
        component = self.components[index.component]
        return {OmegaIndex(component, k): theta for k, theta in system.blocks[index.interval]}

    def support(self, index: OmegaIndex) -> Fraction:
        return self.profiles[index.component].measures[index.interval]

    def lifted(self, index: OmegaIndex, mode: str = "rational") -> OmegaCoefficients:
        return OmegaCoefficients.from_mapping(self.block(index), self.n_max, mode)

    def lifted_matrix(self, mode: str = "rational") -> np.ndarray:
        """Ambient-by-target matrix whose columns are the lifted block functions."""
        ambient = IndexUniverse(self.n_max)
        target = self.target_universe
        shape = (len(ambient), len(target))
        matrix = rational_zeros(shape) if mode == "rational" else np.zeros(shape)
        for j, index in enumerate(target.indices):
            for k, theta in self.block(index).items():
                matrix[ambient.position(k), j] = theta
        return matrix

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "components": list(self.components),
                "systems": [s.to_json() for s in self.systems]}

    @classmethod
    def from_json(cls, data: Mapping) -> "OmegaFaithfulSystem":
        return cls(tuple(FiniteFaithfulSystem.from_json(s) for s in data["systems"]),
                   tuple(data["components"]), int(data["n_max"]))


def lift_system(systems: Sequence[FiniteFaithfulSystem], components: Sequence[int],
                n_max: int) -> OmegaFaithfulSystem:
    """Place ``systems[n]`` (depth ``n``) inside component ``components[n]``."""
    systems = tuple(systems)
    components = tuple(int(c) for c in components)
    if len(systems) != len(components) or not systems:
        raise ValueError("one component per system is required")
    if any(a >= b for a, b in zip(components, components[1:])):
        raise FaithfulSystemError(f"components {components} are not strictly increasing")
    if components[-1] > n_max:
        raise FaithfulSystemError(f"component {components[-1]} exceeds n_max={n_max}")
    for n, (system, component) in enumerate(zip(systems, components)):
        if system.depth != n:
            raise FaithfulSystemError(f"system {n} has depth {system.depth}")
        if system.max_level > component:
            raise FaithfulSystemError(
                f"system {n} uses level {system.max_level} beyond component {component}")
        report = verify_system(system)
        if not report.ok:
            first = report.failures[0]
            raise FaithfulSystemError(f"system {n}: {first.clause} at {first.interval!r}")
    return OmegaFaithfulSystem(systems, components, int(n_max))


def standard_system(depth: int) -> FiniteFaithfulSystem:
    """The Haar system itself as a faithful system of the given depth."""
    return faithful_from_frequencies(tuple(range(depth + 1)))
