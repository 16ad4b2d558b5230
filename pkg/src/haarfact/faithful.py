"""Finite faithful and almost faithful Haar systems.

A system of depth ``n`` assigns to every dyadic interval ``I`` of level at most
``n`` a block: a finite collection of pairwise disjoint dyadic intervals ``K``
with signs ``theta_K``.  The block function is ``sum theta_K h_K``.  Blocks of
the two halves of ``I`` must sit inside the ``+1`` and ``-1`` level sets of the
block function of ``I``; a faithful system fills those level sets exactly and
starts from a block that covers all of ``[0,1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .dyadic import UNIT, DyadicInterval, from_iota, halves, intervals_at_level, intervals_up_to, iota
from .exceptions import FaithfulSystemError, ResolutionError, SelectionError
from .stepfunc import DEFAULT_MAX_RESOLUTION, StepFunction, as_fraction

Block = tuple[tuple[DyadicInterval, int], ...]

# grids larger than this are not materialized during verification
VERIFY_MAX_RESOLUTION = 22


@dataclass(frozen=True)
class SupportProfile:
    """Support measures ``B_I = |supp h~_I|`` and ``mu = B_[0,1)``."""

    mu: Fraction
    measures: Mapping[DyadicInterval, Fraction]

    def ratio_deviation(self, interval: DyadicInterval) -> Fraction:
        """``|I| / B_I - 1/mu``."""
        return interval.measure / self.measures[interval] - 1 / self.mu


@dataclass
class FiniteFaithfulSystem:
    """Blocks ``I -> ((K, theta_K), ...)`` for every ``I`` of level ``<= depth``."""

    depth: int
    blocks: dict[DyadicInterval, Block]
    frequencies: tuple[int, ...] | None = None
    is_faithful: bool = True

    def __post_init__(self):
        self.blocks = {
            interval: tuple(sorted(((k, int(t)) for k, t in block), key=lambda kt: iota(kt[0])))
            for interval, block in sorted(self.blocks.items(), key=lambda kv: iota(kv[0]))
        }
        if self.frequencies is not None:
            self.frequencies = tuple(int(k) for k in self.frequencies)

    @property
    def intervals(self) -> list[DyadicInterval]:
        return intervals_up_to(self.depth)

    @property
    def max_level(self) -> int:
        return max((k.level for block in self.blocks.values() for k, _ in block), default=0)

    @property
    def resolution(self) -> int:
        """Smallest grid resolution on which every block function is a step function."""
        return self.max_level + 1

    def block(self, interval: DyadicInterval) -> Block:
        return self.blocks[interval]

    def function(self, interval: DyadicInterval, resolution: int | None = None,
                 mode: str = "rational") -> StepFunction:
        resolution = self.resolution if resolution is None else resolution
        values = np.zeros(1 << resolution, dtype=np.int64)
        for k, theta in self.blocks[interval]:
            if k.level >= resolution:
                raise ResolutionError(f"resolution {resolution} cannot resolve {k!r}")
            cells = k.cells(resolution)
            mid = (cells.start + cells.stop) // 2
            values[cells.start:mid] += theta
            values[mid:cells.stop] -= theta
        return StepFunction(values, mode)

    def region(self, interval: DyadicInterval, sign: int) -> list[DyadicInterval]:
        """Dyadic intervals whose union is ``[h~_I = sign]``."""
        out = []
        for k, theta in self.blocks[interval]:
            left, right = halves(k)
            out.append(left if theta == sign else right)
        return out

    def support_measure(self, interval: DyadicInterval) -> Fraction:
        return sum((k.measure for k, _ in self.blocks[interval]), Fraction(0))

    def profile(self) -> SupportProfile:
        measures = {i: self.support_measure(i) for i in self.blocks}
        return SupportProfile(measures.get(UNIT, Fraction(0)), measures)

    def coefficient_map(self, interval: DyadicInterval) -> dict[DyadicInterval, int]:
        return {k: theta for k, theta in self.blocks[interval]}

    def to_json(self) -> dict:
        out = {
            "depth": self.depth,
            "faithful": self.is_faithful,
            "blocks": {
                str(iota(i)): {
                    "intervals": [[k.level, k.position] for k, _ in block],
                    "signs": [theta for _, theta in block],
                }
                for i, block in self.blocks.items()
            },
        }
        if self.frequencies is not None:
            out["frequencies"] = list(self.frequencies)
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "FiniteFaithfulSystem":
        blocks = {}
        for key, entry in data["blocks"].items():
            ks = [DyadicInterval(int(a), int(b)) for a, b in entry["intervals"]]
            blocks[from_iota(int(key))] = tuple(zip(ks, (int(s) for s in entry["signs"])))
        frequencies = data.get("frequencies")
        return cls(int(data["depth"]), blocks,
                   tuple(frequencies) if frequencies is not None else None,
                   bool(data.get("faithful", True)))


@dataclass(frozen=True)
class Violation:
    clause: str
    interval: DyadicInterval | None
    detail: str


@dataclass
class VerificationReport:
    strength: str
    failures: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.ok

    def clauses(self) -> set[str]:
        return {v.clause for v in self.failures}


def _cells_mask(intervals: Iterable[DyadicInterval], resolution: int) -> np.ndarray:
    mask = np.zeros(1 << resolution, dtype=np.int32)
    for k in intervals:
        cells = k.cells(resolution)
        mask[cells.start:cells.stop] += 1
    return mask


def verify_system(system: FiniteFaithfulSystem, strength: str | None = None) -> VerificationReport:
    """Check the block conditions at the declared (or requested) strength.

    ``strength`` is ``"faithful"`` or ``"almost"``; it defaults to the system's
    own declaration.
    """
    if strength is None:
        strength = "faithful" if system.is_faithful else "almost"
    report = VerificationReport(strength)
    fail = report.failures.append

    for interval in system.intervals:
        if interval not in system.blocks or not system.blocks[interval]:
            fail(Violation("nonempty", interval, "block is missing or empty"))
    extra = [i for i in system.blocks if i.is_root or i.level > system.depth]
    for interval in extra:
        fail(Violation("index-range", interval, "block outside the system depth"))
    for interval, block in system.blocks.items():
        for k, theta in block:
            if theta not in (1, -1):
                fail(Violation("signs", interval, f"sign {theta} on {k!r}"))
    if report.failures:
        return report

    resolution = system.resolution
    if resolution > VERIFY_MAX_RESOLUTION:
        raise ResolutionError(f"verification grid 2^{resolution} exceeds the cap")

    seen: dict[DyadicInterval, DyadicInterval] = {}
    for interval, block in system.blocks.items():
        mask = _cells_mask((k for k, _ in block), resolution)
        if mask.max(initial=0) > 1:
            fail(Violation("disjoint-within", interval, "block intervals overlap"))
        for k, _ in block:
            if k in seen and seen[k] != interval:
                fail(Violation("disjoint-across", interval, f"{k!r} also used by {seen[k]!r}"))
            seen[k] = interval

    if strength == "faithful":
        if not np.all(_cells_mask((k for k, _ in system.blocks[UNIT]), resolution) == 1):
            fail(Violation("faithful-cover", UNIT, "top block does not cover [0,1)"))

    for interval in system.intervals:
        if interval.level >= system.depth:
            continue
        for sign, child in zip((1, -1), halves(interval)):
            region = _cells_mask(system.region(interval, sign), resolution) > 0
            support = _cells_mask((k for k, _ in system.blocks[child]), resolution) > 0
            if np.any(support & ~region):
                fail(Violation("nested", child, f"block leaves the {'+' if sign > 0 else '-'} "
                               f"level set of {interval!r}"))
            elif strength == "faithful" and np.any(region & ~support):
                fail(Violation("faithful-equality", child,
                               f"block does not fill the level set of {interval!r}"))

    if system.frequencies is not None:
        k = system.frequencies
        if len(k) != system.depth + 1 or any(a >= b for a, b in zip(k, k[1:])):
            fail(Violation("frequencies", None, f"frequencies {k} are not strictly increasing "
                           f"of length depth+1"))
        else:
            for interval, block in system.blocks.items():
                bad = [b for b, _ in block if b.level != k[interval.level]]
                if bad:
                    fail(Violation("frequencies", interval,
                                   f"{bad[0]!r} is not at level {k[interval.level]}"))
    return report


SignSource = Callable[[DyadicInterval], int]


def _build_system(frequencies: Sequence[int], theta: SignSource) -> FiniteFaithfulSystem:
    depth = len(frequencies) - 1
    blocks: dict[DyadicInterval, Block] = {
        UNIT: tuple((k, theta(k)) for k in intervals_at_level(frequencies[0]))}
    for level in range(depth):
        target = frequencies[level + 1]
        for interval in intervals_at_level(level):
            block = blocks[interval]
            for sign, child in zip((1, -1), halves(interval)):
                members = []
                for k, t in block:
                    left, right = halves(k)
                    half = left if t == sign else right
                    for position in half.descendants(target):
                        member = DyadicInterval(target, position)
                        members.append((member, theta(member)))
                blocks[child] = tuple(members)
    return FiniteFaithfulSystem(depth, blocks, tuple(frequencies), True)


def _check_frequencies(frequencies: Sequence[int], resolution: int | None) -> tuple[int, ...]:
    k = tuple(int(v) for v in frequencies)
    if not k:
        raise ValueError("at least one frequency is required")
    if k[0] < 0 or any(a >= b for a, b in zip(k, k[1:])):
        raise ValueError(f"frequencies {k} must be non-negative and strictly increasing")
    cap = DEFAULT_MAX_RESOLUTION if resolution is None else resolution
    if k[-1] >= cap:
        raise ResolutionError(f"frequency {k[-1]} does not fit below resolution {cap}")
    return k


def faithful_from_frequencies(frequencies: Sequence[int],
                              resolution: int | None = None) -> FiniteFaithfulSystem:
    """The faithful system whose level-``j`` blocks live at level ``frequencies[j]``.

    The top block function is the Rademacher function at ``frequencies[0]`` and
    each child block restricts the next Rademacher function to the matching
    level set of its parent.
    """
    k = _check_frequencies(frequencies, resolution)
    return _build_system(k, lambda _: 1)


def theta_stream(seed, count: int) -> np.ndarray:
    """``count`` uniform signs from one counter-based stream keyed by ``seed``."""
    key = seed if isinstance(seed, (list, tuple)) else [seed]
    generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))
    return 1 - 2 * generator.integers(0, 2, size=count, dtype=np.int8).astype(np.int64)


def randomized_owners(n: int, m: int, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Vectorized block membership of a randomized faithful system.

    For each step ``j <= n`` returns ``(owner, signs)`` over the intervals at
    level ``m + j``: ``owner[p]`` is the position (at level ``j``) of the
    interval whose block contains the ``p``-th interval, and ``signs[p]`` its
    sign.  ``theta`` holds one sign per interval of level at most ``m + n``,
    indexed by ``iota - 1``.
    """
    out = []
    for j in range(n + 1):
        level = m + j
        positions = np.arange(1 << level, dtype=np.int64)
        owner = np.zeros(1 << level, dtype=np.int64)
        for i in range(j):
            ancestor = positions >> (j - i)
            flipped = theta[(1 << (m + i)) + ancestor - 1] < 0
            direction = (positions >> (j - 1 - i)) & 1
            owner = 2 * owner + (direction ^ flipped.astype(np.int64))
        out.append((owner, theta[(1 << level) + positions - 1]))
    return out


def randomize_faithful(n: int, m: int, seed=0, *, signs=None,
                       resolution: int | None = None) -> FiniteFaithfulSystem:
    """Faithful system on frequencies ``m, ..., m+n`` with random signs.

    One sign per interval of level at most ``m+n`` is drawn, in ``iota`` order,
    from a single Philox stream keyed by ``seed``.  ``signs`` overrides the
    stream: a constant or an array indexed by ``iota - 1``.
    """
    k = _check_frequencies(range(m, m + n + 1), resolution)
    count = (1 << (m + n + 1)) - 1
    if signs is None:
        table = theta_stream(seed, count)
    elif np.isscalar(signs):
        table = np.full(count, int(signs), dtype=np.int64)
    else:
        table = np.asarray(signs, dtype=np.int64)
        if table.shape != (count,):
            raise ValueError(f"expected {count} signs")
    if not np.all(np.abs(table) == 1):
        raise ValueError("signs must be +1 or -1")
    blocks: dict[DyadicInterval, list] = {}
    for j, (owner, theta) in enumerate(randomized_owners(n, m, table)):
        level = m + j
        members: dict[int, list] = {}
        for p, (q, t) in enumerate(zip(owner.tolist(), theta.tolist())):
            members.setdefault(q, []).append((DyadicInterval(level, p), t))
        for q, block in members.items():
            blocks[DyadicInterval(j, q)] = tuple(block)
    return FiniteFaithfulSystem(n, blocks, k, True)


def extend_to_faithful(system: FiniteFaithfulSystem, ambient_depth: int | None = None
                       ) -> tuple[FiniteFaithfulSystem, dict[DyadicInterval, int]]:
    """Complete an almost faithful system to a faithful one.

    Parameters
    ----------
    system : FiniteFaithfulSystem
        An almost faithful system.
    ambient_depth : int, optional
        Offset ``L`` such that every level-``j`` block uses intervals of level
        at most ``L + j``; defaults to the smallest such offset.

    Returns
    -------
    completed : FiniteFaithfulSystem
        Faithful system whose level-``j`` blocks add filler intervals of level
        ``L + j`` covering the gaps.
    rho : dict
        0-1 multiplier pattern over all intervals of level at most
        ``L + depth``.  It vanishes exactly on the fillers and their
        descendants, so applying it to a completed block recovers the original
        block.
    """
    report = verify_system(system, "almost")
    if not report.ok:
        first = report.failures[0]
        raise FaithfulSystemError(f"input is not almost faithful: {first.clause} at "
                                  f"{first.interval!r}: {first.detail}")
    needed = max(k.level - i.level for i, block in system.blocks.items() for k, _ in block)
    base = needed if ambient_depth is None else int(ambient_depth)
    if needed > base:
        raise FaithfulSystemError(f"blocks need offset {needed} beyond {base}")

    fillers: list[DyadicInterval] = []
    used = _cells_mask((k for k, _ in system.blocks[UNIT]), base) > 0
    top_fill = [DyadicInterval(base, int(p)) for p in np.flatnonzero(~used)]
    fillers += top_fill
    blocks: dict[DyadicInterval, Block] = {UNIT: system.blocks[UNIT] + tuple((k, 1) for k in top_fill)}

    completed = FiniteFaithfulSystem(0, dict(blocks), None, True)
    for level in range(system.depth):
        resolution = base + level + 1
        for interval in intervals_at_level(level):
            for sign, child in zip((1, -1), halves(interval)):
                region = _cells_mask(completed.region(interval, sign), resolution) > 0
                taken = _cells_mask((k for k, _ in system.blocks[child]), resolution) > 0
                fill = [DyadicInterval(resolution, int(p)) for p in np.flatnonzero(region & ~taken)]
                fillers += fill
                blocks[child] = system.blocks[child] + tuple((k, 1) for k in fill)
                completed.blocks[child] = blocks[child]

    rho = {k: int(not any(f.contains(k) for f in fillers))
           for k in intervals_up_to(base + system.depth)}
    return FiniteFaithfulSystem(system.depth, blocks, None, True), rho


def apply_zero_one(rho: Mapping[DyadicInterval, int], coefficients: Mapping[DyadicInterval, int]
                   ) -> dict[DyadicInterval, int]:
    """Apply a 0-1 Haar multiplier to a block's coefficient map."""
    return {k: v for k, v in coefficients.items() if rho.get(k, 0)}


@dataclass
class SignSelection:
    """Result of the sign selection: an almost faithful system with uniform sign."""

    system: FiniteFaithfulSystem
    sign: int
    profile: SupportProfile
    depth_reached: int
    mu_by_sign: dict[int, Fraction]


def _diagonal_table(diagonal, depth: int | None) -> tuple[dict[DyadicInterval, Fraction | float], int]:
    if isinstance(diagonal, Mapping):
        table = dict(diagonal)
        inferred = max(k.level for k in table)
    else:
        values = list(diagonal)
        size = len(values)
        inferred = (size + 1).bit_length() - 2
        if (1 << (inferred + 1)) - 1 != size:
            raise ValueError("diagonal length must be 2^(N+1)-1")
        table = {from_iota(i + 1): v for i, v in enumerate(values)}
    depth = inferred if depth is None else depth
    missing = [k for k in intervals_up_to(depth) if k not in table]
    if missing:
        raise ValueError(f"diagonal entry missing for {missing[0]!r}")
    return table, depth


def _select_with_sign(table, n: int, depth: int, delta, sign: int):
    @lru_cache(maxsize=None)
    def good(k: DyadicInterval) -> bool:
        return sign * table[k] >= delta

    @lru_cache(maxsize=None)
    def viable(k: DyadicInterval, step: int) -> bool:
        if not good(k):
            return False
        if step == n:
            return True
        if k.level >= depth:
            return False
        left, right = halves(k)
        return tile(left, step + 1) and tile(right, step + 1)

    @lru_cache(maxsize=None)
    def tile(h: DyadicInterval, step: int) -> bool:
        if viable(h, step):
            return True
        if h.level >= depth:
            return False
        left, right = halves(h)
        return tile(left, step) and tile(right, step)

    def cover(h: DyadicInterval, step: int) -> list[DyadicInterval]:
        if viable(h, step):
            return [h]
        left, right = halves(h)
        return cover(left, step) + cover(right, step)

    def maximal(h: DyadicInterval) -> list[DyadicInterval]:
        if viable(h, 0):
            return [h]
        if h.level >= depth:
            return []
        left, right = halves(h)
        return maximal(left) + maximal(right)

    top = maximal(UNIT)
    if not top:
        return None
    blocks: dict[DyadicInterval, Block] = {UNIT: tuple((k, 1) for k in top)}
    for level in range(n):
        for interval in intervals_at_level(level):
            block = blocks[interval]
            plus = [piece for k, _ in block for piece in cover(halves(k)[0], level + 1)]
            minus = [piece for k, _ in block for piece in cover(halves(k)[1], level + 1)]
            left, right = halves(interval)
            blocks[left] = tuple((k, 1) for k in plus)
            blocks[right] = tuple((k, 1) for k in minus)
    return FiniteFaithfulSystem(n, blocks, None, False)


def gamlen_gaudet_select(diagonal, n: int, eta, delta, *, depth: int | None = None,
                         operator=None, sign: int | None = None) -> SignSelection:
    """Select an almost faithful depth-``n`` system on which the diagonal has one sign.

    Parameters
    ----------
    diagonal : mapping or sequence
        Diagonal entries ``<h_K, T h_K>/|K|`` for all ``K`` of level at most
        ``depth``, keyed by interval or listed in ``iota`` order.
    n : int
        Depth of the selected system.
    eta, delta : number
        Profile tolerance and the lower bound ``|d_K| >= delta``.
    operator : HaarOperator, optional
        Full matrix of the operator; when given the quadratic-form
        postcondition is verified with all off-diagonal terms.
    sign : {1, -1}, optional
        Force the sign instead of choosing the one with larger kept measure.

    Every block interval ``K`` satisfies ``sign * d_K >= delta`` and every block
    is split exactly by its parent, so ``|I| / B_I = 1 / mu`` with no slack.
    """
    table, depth = _diagonal_table(diagonal, depth)
    exact = all(isinstance(v, (int, Fraction)) for v in table.values())
    delta_value = as_fraction(delta) if exact else float(delta)
    eta_value = as_fraction(eta) if exact else float(eta)
    if n < 0:
        raise ValueError("depth must be non-negative")
    bad = [k for k, v in table.items() if k.level <= depth and abs(v) < delta_value]
    if bad:
        raise SelectionError(f"|d| < delta at {bad[0]!r}", {"interval": repr(bad[0])})

    candidates = (1, -1) if sign is None else (int(sign),)
    systems = {s: _select_with_sign(table, n, depth, delta_value, s) for s in candidates}
    mu = {s: (sy.support_measure(UNIT) if sy is not None else Fraction(0))
          for s, sy in systems.items()}
    chosen = max(candidates, key=lambda s: (mu[s], s))
    system = systems[chosen]
    if system is None or mu[chosen] < Fraction(1, 2):
        reached = -1
        for trial in range(n - 1, -1, -1):
            trial_mu = max(
                (sy.support_measure(UNIT) if (sy := _select_with_sign(table, trial, depth,
                                                                      delta_value, s)) else 0)
                for s in candidates)
            if trial_mu >= Fraction(1, 2):
                reached = trial
                break
        raise SelectionError(
            f"depth {n} needs more than {depth} levels (mu={mu[chosen]})",
            {"requested_depth": n, "achieved_depth": reached, "mu": str(mu[chosen]),
             "levels": depth})

    profile = system.profile()
    for interval in system.intervals:
        deviation = profile.ratio_deviation(interval)
        upper = eta_value / (n * profile.mu) if n else None
        if deviation < 0 or (upper is not None and deviation > upper):
            raise SelectionError(f"support profile violated at {interval!r}",
                                 {"interval": repr(interval), "deviation": str(deviation)})
    _check_quadratic_form(system, table, operator, chosen, delta_value)
    return SignSelection(system, chosen, profile, n, mu)


def _check_quadratic_form(system, table, operator, sign, delta) -> None:
    for interval, block in system.blocks.items():
        norm_sq = sum((k.measure for k, _ in block), Fraction(0))
        if operator is None:
            form = sum(k.measure * table[k] for k, _ in block)
        else:
            form = operator.quadratic_form(dict(block))
        if sign * form < delta * norm_sq:
            raise SelectionError(f"quadratic form too small on {interval!r}",
                                 {"interval": repr(interval), "form": str(form)})
