"""Integer partitions, set partitions and the paintbox sampler.

Integer partitions are stored as non-increasing tuples of positive parts.
Set partitions are stored with blocks sorted by least element, which is the
only canonical form used for equality.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "IntPartition",
    "EMPTY",
    "SetPartition",
    "enumerate_partitions",
    "iter_partitions",
    "count_partitions",
    "shape_count",
    "refined_count",
    "paintbox",
    "uniform_shape_partition",
    "block_containing_probability",
    "falling",
]

# tail mass below which paintbox cells are folded into singleton dust
PAINTBOX_TAIL = 1e-15


@dataclass(frozen=True, order=False)
class IntPartition:
    """A partition of an integer, as a non-increasing tuple of parts.

    The extra element of P_1 used by leaf-sized models (a ball that gets
    wiped out) is the module constant :data:`EMPTY`; it has no parts but
    still reports ``n == 1``.
    """

    parts: tuple[int, ...]
    is_empty: bool = False
    _mult: dict = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        parts = tuple(int(x) for x in self.parts)
        if self.is_empty:
            if parts:
                raise ValueError("the empty partition has no parts")
        else:
            if not parts:
                raise ValueError("a partition needs at least one part")
            if any(x < 1 for x in parts):
                raise ValueError(f"parts must be positive: {parts}")
            if any(parts[i] < parts[i + 1] for i in range(len(parts) - 1)):
                raise ValueError(f"parts must be non-increasing: {parts}")
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "_mult", dict(Counter(parts)))

    @classmethod
    def from_parts(cls, parts: Iterable[int]) -> "IntPartition":
        """Build from parts in any order (zeros are dropped)."""
        return cls(tuple(sorted((int(x) for x in parts if x), reverse=True)))

    @property
    def n(self) -> int:
        return 1 if self.is_empty else sum(self.parts)

    @property
    def p(self) -> int:
        return len(self.parts)

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, i):
        return self.parts[i]

    def multiplicity(self, j: int) -> int:
        return self._mult.get(j, 0)

    def multiplicities(self) -> dict[int, int]:
        return dict(self._mult)

    @property
    def largest(self) -> int:
        return self.parts[0] if self.parts else 0

    def is_trivial(self) -> bool:
        """True for the one-part partition (n)."""
        return len(self.parts) == 1

    def scaled(self, n: int | None = None) -> np.ndarray:
        """Parts divided by ``n`` (default: the partition's own size)."""
        if self.is_empty:
            return np.zeros(0)
        return np.asarray(self.parts, dtype=float) / (n or self.n)

    def to_json(self) -> list[int]:
        return list(self.parts)

    def __repr__(self):
        if self.is_empty:
            return "IntPartition(EMPTY)"
        return f"IntPartition{self.parts}"

    def __lt__(self, other):
        # reverse-lexicographic enumeration order is the *descending* tuple order
        return self.parts > other.parts


EMPTY = IntPartition((), is_empty=True)


def iter_partitions(n: int, max_parts: int | None = None, max_part: int | None = None
                    ) -> Iterator[tuple[int, ...]]:
    """Yield partitions of ``n`` as tuples, in reverse lexicographic order."""
    if n < 1:
        raise ValueError("n must be positive")
    if max_parts is None:
        max_parts = n
    if max_part is None:
        max_part = n

    def rec(rest, cap, slots):
        if rest == 0:
            yield ()
            return
        if slots == 0:
            return
        # the remaining slots must be able to hold what is left
        for first in range(min(rest, cap), 0, -1):
            if first * slots < rest:
                break
            for tail in rec(rest - first, first, slots - 1):
                yield (first,) + tail

    yield from rec(n, max_part, max_parts)


def enumerate_partitions(n: int, max_parts: int | None = None) -> list[IntPartition]:
    """All partitions of ``n`` with at most ``max_parts`` parts.

    The order is reverse lexicographic: ``(4), (3, 1), (2, 2), (2, 1, 1),
    (1, 1, 1, 1)``. The extra element of P_1 is not included.
    """
    return [IntPartition(t) for t in iter_partitions(n, max_parts)]


def count_partitions(n: int) -> int:
    """Number of integer partitions of ``n`` (Euler's pentagonal recurrence)."""
    p = [1] + [0] * n
    for m in range(1, n + 1):
        total, k = 0, 1
        while True:
            g1 = k * (3 * k - 1) // 2
            if g1 > m:
                break
            sign = 1 if k % 2 else -1
            total += sign * p[m - g1]
            g2 = k * (3 * k + 1) // 2
            if g2 <= m:
                total += sign * p[m - g2]
            k += 1
        p[m] = total
    return p[n]


def falling(x: int, k: int) -> int:
    """Falling factorial (x)_k, zero when k exceeds x for integer x."""
    out = 1
    for i in range(k):
        out *= x - i
    return out


def shape_count(lam: IntPartition) -> int:
    """Number of set partitions of [n] whose block sizes are ``lam``."""
    if lam.is_empty:
        raise ValueError("shape_count is undefined for the empty partition")
    denom = 1
    for part in lam.parts:
        denom *= math.factorial(part)
    for mult in lam.multiplicities().values():
        denom *= math.factorial(mult)
    return math.factorial(lam.n) // denom


@dataclass(frozen=True)
class SetPartition:
    """A partition of a finite set of positive integer labels.

    ``blocks`` is always a tuple of sorted tuples, ordered by least element.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = [tuple(sorted(int(x) for x in b)) for b in self.blocks]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("blocks must be nonempty")
        seen = set()
        for b in blocks:
            for x in b:
                if x in seen:
                    raise ValueError(f"label {x} appears twice")
                seen.add(x)
        blocks.sort(key=lambda b: b[0])
        object.__setattr__(self, "blocks", tuple(blocks))

    @classmethod
    def coarsest(cls, ground: Iterable[int]) -> "SetPartition":
        """The one-block partition O_B."""
        return cls((tuple(ground),))

    @classmethod
    def finest(cls, ground: Iterable[int]) -> "SetPartition":
        """The all-singletons partition I_B."""
        return cls(tuple((x,) for x in ground))

    @classmethod
    def from_labels(cls, items: Sequence[int], keys: Sequence) -> "SetPartition":
        """Group ``items`` by equal ``keys``."""
        groups: dict = {}
        for item, key in zip(items, keys):
            groups.setdefault(key, []).append(item)
        return cls(tuple(tuple(g) for g in groups.values()))

    @property
    def ground(self) -> frozenset[int]:
        return frozenset(x for b in self.blocks for x in b)

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def block_of(self, i: int) -> tuple[int, ...]:
        for b in self.blocks:
            if i in b:
                return b
        raise KeyError(i)

    def restrict(self, subset: Iterable[int]) -> "SetPartition":
        sub = set(subset)
        if not sub:
            raise ValueError("cannot restrict to the empty set")
        if not sub <= self.ground:
            raise ValueError("restriction set is not contained in the ground set")
        blocks = [tuple(x for x in b if x in sub) for b in self.blocks]
        return SetPartition(tuple(b for b in blocks if b))

    def shape(self) -> IntPartition:
        return IntPartition.from_parts(len(b) for b in self.blocks)

    def is_finest(self) -> bool:
        return all(len(b) == 1 for b in self.blocks)

    def refines(self, other: "SetPartition") -> bool:
        """True when every block of ``self`` sits inside a block of ``other``."""
        if self.ground != other.ground:
            return False
        owner = {x: i for i, b in enumerate(other.blocks) for x in b}
        return all(len({owner[x] for x in b}) == 1 for b in self.blocks)

    def relabel(self, mapping) -> "SetPartition":
        return SetPartition(tuple(tuple(mapping[x] for x in b) for b in self.blocks))

    def to_json(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]

    @classmethod
    def from_json(cls, data) -> "SetPartition":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(tuple(tuple(b) for b in data))

    def __repr__(self):
        return "{" + "|".join(",".join(map(str, b)) for b in self.blocks) + "}"


def _rest_multiset_count(sizes: Sequence[int], m: int) -> int:
    """Ways to split ``m`` labelled items into unlabelled blocks of ``sizes``."""
    if sum(sizes) != m:
        return 0
    denom = 1
    for s in sizes:
        denom *= math.factorial(s)
    for mult in Counter(sizes).values():
        denom *= math.factorial(mult)
    return math.factorial(m) // denom


def refined_count(lam: IntPartition, sub: SetPartition, assignment: Sequence[int]) -> int:
    """Count partitions of [n] with shape ``lam`` that restrict to ``sub`` on [k].

    ``assignment`` gives, for the j-th block of ``sub`` (least-element order),
    the 1-based index of the part of ``lam`` that block must grow into.
    Indices must be pairwise distinct. Unassigned parts become blocks that do
    not meet [k]; equal-sized ones among them are interchangeable.
    """
    if lam.is_empty:
        raise ValueError("refined_count is undefined for the empty partition")
    n = lam.n
    k = sub.size
    if sub.ground != frozenset(range(1, k + 1)):
        raise ValueError("sub must be a partition of [k]")
    if k > n:
        raise ValueError("k exceeds n")
    if len(assignment) != len(sub.blocks):
        raise ValueError("one part index per block is required")
    idx = [int(i) - 1 for i in assignment]
    if len(set(idx)) != len(idx) or any(i < 0 or i >= lam.p for i in idx):
        raise ValueError("assignment indices must be distinct parts of lam")
    grow = []
    for block, i in zip(sub.blocks, idx):
        if len(block) > lam[i]:
            raise ValueError("a block is larger than its assigned part")
        grow.append(lam[i] - len(block))
    used = set(idx)
    rest = [lam[i] for i in range(lam.p) if i not in used]
    m = n - k
    left = m - sum(grow)
    if left != sum(rest):
        return 0
    # fill the grown blocks (labelled by their [k]-trace), then split the rest
    denom = math.factorial(left)
    for g in grow:
        denom *= math.factorial(g)
    ways_grow = math.factorial(m) // denom
    return ways_grow * _rest_multiset_count(rest, left)


def _categorical(s: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(s)
    u = rng.random(n) * cdf[-1]
    return np.searchsorted(cdf, u, side="right")


def paintbox(s, n: int, rng: np.random.Generator) -> SetPartition:
    """Paintbox partition of [n] driven by the mass partition ``s``.

    Labels i and j share a block iff their i.i.d. cell draws coincide.
    Cells past the point where the remaining tail mass drops below 1e-15 are
    replaced by dust: each label landing there is a singleton.
    """
    s = np.asarray(getattr(s, "entries", s), dtype=float)
    if n < 1:
        raise ValueError("n must be positive")
    if abs(s.sum() - 1.0) > 1e-12:
        raise ValueError(f"paintbox needs a mass partition summing to 1, got {s.sum()!r}")
    tail = 1.0 - np.cumsum(s)
    cut = int(np.argmax(tail < PAINTBOX_TAIL)) + 1 if np.any(tail < PAINTBOX_TAIL) else len(s)
    cells = np.append(s[:cut], max(0.0, 1.0 - s[:cut].sum()))
    draws = _categorical(cells, n, rng)
    keys = [int(d) if d < cut else ("dust", i) for i, d in enumerate(draws)]
    return SetPartition.from_labels(range(1, n + 1), keys)


def uniform_shape_partition(lam: IntPartition, ground: Iterable[int],
                            rng: np.random.Generator) -> SetPartition:
    """Uniform set partition of ``ground`` among those with block sizes ``lam``."""
    labels = list(ground)
    if lam.is_empty:
        if len(labels) != 1:
            raise ValueError("the empty partition only applies to a single label")
        return SetPartition(((labels[0],),))
    if len(labels) != lam.n:
        raise ValueError(f"ground set has {len(labels)} labels, shape needs {lam.n}")
    perm = rng.permutation(len(labels))
    blocks, start = [], 0
    for part in lam.parts:
        blocks.append(tuple(labels[j] for j in perm[start:start + part]))
        start += part
    return SetPartition(tuple(blocks))


def block_containing_probability(n: int, k: int, block_size: int, l: int) -> Fraction:
    """P([k] ∩ block(1) equals a fixed l-subset of [k] containing 1 | #block(1)).

    Valid for any exchangeable partition of [n]; exact rational.
    """
    if not (1 <= l <= k <= n):
        raise ValueError("need 1 <= l <= k <= n")
    if not (1 <= block_size <= n):
        raise ValueError("need 1 <= block_size <= n")
    num = falling(block_size - 1, l - 1) * falling(n - block_size, k - l)
    return Fraction(num, falling(n - 1, k - 1))
