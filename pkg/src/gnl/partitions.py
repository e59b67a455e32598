"""Pair partitions, the refinement order, and the crossing classification map.

Elements are 1-based integers.  Restrictions keep the original labels, so a
partition of ``{1, 3, 5, 6}`` is stored with exactly those integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb, prod
from typing import Iterable, Iterator

ENUM_CAP = 14
FIBER_CAP = 12


def _fmt_block(block: Iterable[int]) -> str:
    return "{" + ",".join(str(i) for i in sorted(block)) + "}"


@dataclass(frozen=True)
class SetPartition:
    """Partition of a finite set of integers into nonempty blocks."""

    blocks: tuple[tuple[int, ...], ...]
    ground: frozenset[int] = field(default=frozenset(), compare=False)

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted(b)) for b in self.blocks))
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise ValueError("empty block")
            if seen.intersection(b):
                raise ValueError("blocks overlap")
            seen.update(b)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "ground", frozenset(seen))

    @classmethod
    def of(cls, *blocks: Iterable[int]) -> "SetPartition":
        return cls(tuple(tuple(b) for b in blocks))

    def block_of(self) -> dict[int, int]:
        return {i: t for t, b in enumerate(self.blocks) for i in b}

    def __str__(self) -> str:
        return "".join(_fmt_block(b) for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class PairPartition:
    """Pair partition of ``{1..p}`` (or of a subset, after restriction)."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        pairs = tuple(sorted((min(a, b), max(a, b)) for a, b in self.pairs))
        flat = [i for pr in pairs for i in pr]
        if len(set(flat)) != len(flat) or any(a == b for a, b in pairs):
            raise ValueError("pairs must be disjoint two-element blocks")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def of(cls, *pairs: tuple[int, int]) -> "PairPartition":
        return cls(tuple(pairs))

    @property
    def p(self) -> int:
        return 2 * len(self.pairs)

    @property
    def ground(self) -> frozenset[int]:
        return frozenset(i for pr in self.pairs for i in pr)

    @property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        return self.pairs

    def partner(self) -> dict[int, int]:
        out = {}
        for a, b in self.pairs:
            out[a] = b
            out[b] = a
        return out

    def as_set_partition(self) -> SetPartition:
        return SetPartition(self.pairs)

    def __str__(self) -> str:
        return "".join(_fmt_block(b) for b in self.pairs)


Partition = SetPartition | PairPartition


# -- counting ---------------------------------------------------------------------


def double_factorial(n: int) -> int:
    return prod(range(n, 0, -2)) if n > 0 else 1


def catalan(m: int) -> int:
    return comb(2 * m, m) // (m + 1)


# -- enumeration ------------------------------------------------------------------


def _pairings(elems: tuple[int, ...]) -> Iterator[tuple[tuple[int, int], ...]]:
    # smallest unpaired element matched with each larger one, in increasing order
    if not elems:
        yield ()
        return
    first, rest = elems[0], elems[1:]
    for t, partner in enumerate(rest):
        remaining = rest[:t] + rest[t + 1 :]
        for tail in _pairings(remaining):
            yield ((first, partner),) + tail


def pair_partitions_of(ground: Iterable[int]) -> Iterator[PairPartition]:
    """All pair partitions of a finite set, in canonical order."""
    elems = tuple(sorted(ground))
    if len(elems) % 2:
        return
    for pairs in _pairings(elems):
        yield PairPartition(pairs)


def enum_pair_partitions(p: int) -> Iterator[PairPartition]:
    """Every pair partition of ``[p]`` exactly once; ``(p-1)!!`` of them."""
    if p < 2 or p % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p}")
    if p > ENUM_CAP:
        raise ValueError(f"p={p} exceeds the enumeration cap {ENUM_CAP}")
    return pair_partitions_of(range(1, p + 1))


# -- order and crossings ----------------------------------------------------------


def _blocks(part: Partition) -> tuple[tuple[int, ...], ...]:
    return part.blocks


def leq(nu: Partition, sigma: Partition) -> bool:
    """``nu <= sigma``: every block of ``nu`` sits inside a block of ``sigma``."""
    if nu.ground != sigma.ground:
        raise ValueError("partitions live on different ground sets")
    where = {i: t for t, b in enumerate(_blocks(sigma)) for i in b}
    return all(len({where[i] for i in b}) == 1 for b in _blocks(nu))


def crossing_witness(part: Partition) -> tuple[int, int, int, int] | None:
    """Some ``i1<i2<i3<i4`` with ``i1~i3`` and ``i2~i4`` in different blocks, or None."""
    blocks = _blocks(part)
    for B, C in combinations(blocks, 2):
        for a, c in combinations(B, 2):
            for b, e in combinations(C, 2):
                if a < b < c < e:
                    return (a, b, c, e)
                if b < a < e < c:
                    return (b, a, e, c)
    return None


def is_noncrossing(part: Partition) -> bool:
    return crossing_witness(part) is None


def crossing_pairs_witness(sigma: Partition) -> tuple[int, int, int, int] | None:
    """``i1<i2<i3<i4`` with ``{i1,i3}`` and ``{i2,i4}`` both blocks, or None."""
    pairs = [b for b in _blocks(sigma) if len(b) == 2]
    for (a, c), (b, e) in combinations(pairs, 2):
        if a < b < c < e:
            return (a, b, c, e)
        if b < a < e < c:
            return (b, a, e, c)
    return None


def restrict(part: Partition, subset: Iterable[int]) -> Partition:
    """Intersect blocks with ``subset``, dropping empties; labels are kept."""
    sub = frozenset(subset)
    if not sub <= part.ground:
        raise ValueError("subset is not contained in the ground set")
    blocks = [tuple(i for i in b if i in sub) for b in _blocks(part)]
    blocks = [b for b in blocks if b]
    if isinstance(part, PairPartition) and all(len(b) == 2 for b in blocks):
        return PairPartition(tuple(blocks))
    return SetPartition(tuple(blocks))


def splits(subset: Iterable[int], part: Partition) -> bool:
    """True when ``subset`` is a union of blocks of ``part``."""
    sub = frozenset(subset)
    return all(set(b) <= sub or not sub.intersection(b) for b in _blocks(part))


# -- the classification map -------------------------------------------------------


def connected_span(nu: PairPartition, k: int) -> frozenset[int]:
    """Elements of ``[p]`` sharing a block with one of ``1..k``."""
    if not 1 <= k <= nu.p:
        raise ValueError(f"k={k} outside [1, {nu.p}]")
    partner = nu.partner()
    return frozenset(j for i in range(1, k + 1) for j in (i, partner[i]))


def crossing_depth(nu: PairPartition) -> int:
    """Largest ``k`` for which ``nu`` restricted to ``connected_span(nu, k)`` is noncrossing."""
    if is_noncrossing(nu):
        raise ValueError(f"{nu} is noncrossing; crossing depth is undefined")
    depth = 0
    for k in range(1, nu.p + 1):
        if is_noncrossing(restrict(nu, connected_span(nu, k))):
            depth = k
    return depth


def phi(nu: PairPartition) -> SetPartition:
    """Restriction of ``nu`` to the first crossing span, plus the complement as one block.

    The complement block is omitted when it is empty.
    """
    k = crossing_depth(nu)
    span = connected_span(nu, k + 1)
    blocks = list(restrict(nu, span).blocks)
    rest = sorted(set(range(1, nu.p + 1)) - span)
    if rest:
        blocks.append(tuple(rest))
    return SetPartition(tuple(blocks))


def crossing_partitions(p: int) -> Iterator[PairPartition]:
    return (nu for nu in enum_pair_partitions(p) if not is_noncrossing(nu))


def phi_fibers(p: int) -> list[SetPartition]:
    """Distinct values of ``phi`` over all crossing pair partitions of ``[p]``."""
    if p < 4 or p % 2:
        raise ValueError(f"fibers need an even p >= 4, got {p}")
    if p > FIBER_CAP:
        raise ValueError(f"p={p} exceeds the fiber cap {FIBER_CAP}")
    return sorted({phi(nu) for nu in crossing_partitions(p)}, key=lambda s: s.blocks)


def pair_refinements(sigma: SetPartition) -> Iterator[PairPartition]:
    """All pair partitions ``nu`` with ``nu <= sigma``."""

    def rec(t: int) -> Iterator[tuple[tuple[int, int], ...]]:
        if t == len(sigma.blocks):
            yield ()
            return
        for head in _pairings(sigma.blocks[t]):
            for tail in rec(t + 1):
                yield head + tail

    if any(len(b) % 2 for b in sigma.blocks):
        return
    for pairs in rec(0):
        yield PairPartition(pairs)


@dataclass
class PhiReport:
    p: int
    n_pair: int
    n_noncrossing: int
    n_crossing: int
    n_fibers: int
    fiber_cap: int
    refines: bool
    constant_on_fibers: bool
    has_crossing_quadruple: bool
    range_bounded: bool
    unique_fiber: bool
    fiber_members: dict[SetPartition, int]

    @property
    def passed(self) -> bool:
        return (self.refines and self.constant_on_fibers and self.has_crossing_quadruple
                and self.range_bounded and self.unique_fiber)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"P2={self.n_pair} NC2={self.n_noncrossing} Cr2={self.n_crossing} "
                f"phi-props: {status}")


def verify_phi(p: int) -> PhiReport:
    """Exhaustively check the four properties of ``phi`` and the fiber decomposition."""
    allp = list(enum_pair_partitions(p))
    crossing = [nu for nu in allp if not is_noncrossing(nu)]
    n_nc = len(allp) - len(crossing)
    if p < 4:
        return PhiReport(p, len(allp), n_nc, 0, 0, 4**p * p * p, True, True, True, True, True, {})

    images = {nu: phi(nu) for nu in crossing}
    fibers = sorted(set(images.values()), key=lambda s: s.blocks)
    refines = all(leq(nu, s) for nu, s in images.items())
    has_quad = all(crossing_pairs_witness(s) is not None for s in fibers)
    constant = True
    for s in fibers:
        for nu_hat in pair_refinements(s):
            if not is_noncrossing(nu_hat) and images[nu_hat] != s:
                constant = False
    members = {s: 0 for s in fibers}
    unique = True
    for nu in crossing:
        hits = [s for s in fibers if leq(nu, s)]
        unique &= len(hits) == 1
        for s in hits:
            members[s] += 1
    cap = 4**p * p * p
    return PhiReport(
        p=p,
        n_pair=len(allp),
        n_noncrossing=n_nc,
        n_crossing=len(crossing),
        n_fibers=len(fibers),
        fiber_cap=cap,
        refines=refines,
        constant_on_fibers=constant,
        has_crossing_quadruple=has_quad,
        range_bounded=len(fibers) <= cap,
        unique_fiber=unique,
        fiber_members=members,
    )
