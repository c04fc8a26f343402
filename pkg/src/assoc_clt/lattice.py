"""Multi-index arithmetic and axis-aligned integer boxes on Z^d.

A :class:`Box` is half-open on the lower side: it holds the lattice points
``j`` with ``lower < j <= upper`` coordinate-wise, so ``Box.of_size(n)`` is
the block ``{j : 1 <= j <= n}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "MultiIndex",
    "Box",
    "as_index",
    "leq",
    "lt",
    "join",
    "floor",
    "product",
    "enumerate_box",
    "dyadic",
]

INT64_MAX = 2**63 - 1


class DimensionMismatch(ValueError):
    pass


class MultiIndex(tuple):
    """Immutable point of Z^d, stored as a tuple of Python ints."""

    def __new__(cls, coords: Iterable[int]) -> "MultiIndex":
        values = []
        for c in coords:
            if isinstance(c, (bool, np.bool_)):
                raise TypeError("boolean coordinates are not allowed")
            if isinstance(c, (float, np.floating)):
                if not float(c).is_integer():
                    raise TypeError(f"non-integer coordinate {c!r}")
            values.append(int(c))
        if not values:
            raise ValueError("a multi-index needs at least one coordinate")
        return super().__new__(cls, values)

    @property
    def dim(self) -> int:
        return len(self)

    @classmethod
    def fill(cls, value: int, d: int) -> "MultiIndex":
        return cls([value] * d)

    def __repr__(self) -> str:
        return f"MultiIndex{tuple(self)!r}"

    def leq(self, other: Sequence[int]) -> bool:
        return leq(self, other)

    def lt(self, other: Sequence[int]) -> bool:
        return lt(self, other)

    def join(self, other: Sequence[int]) -> "MultiIndex":
        return join(self, other)

    def shift(self, other: Sequence[int], sign: int = 1) -> "MultiIndex":
        _check_dims(self, other)
        return MultiIndex(a + sign * b for a, b in zip(self, other))


def as_index(x: Sequence[int] | int, d: int | None = None) -> MultiIndex:
    """Coerce ``x`` to a :class:`MultiIndex`; a scalar is broadcast to ``d`` coordinates."""
    if isinstance(x, MultiIndex) and (d is None or x.dim == d):
        return x
    if np.isscalar(x):
        return MultiIndex.fill(int(x), d or 1)
    idx = MultiIndex(x)
    if d is not None and idx.dim != d:
        raise DimensionMismatch(f"expected dimension {d}, got {idx.dim}")
    return idx


def _check_dims(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise DimensionMismatch(f"dimension mismatch: {len(a)} vs {len(b)}")


def leq(a: Sequence[int], b: Sequence[int]) -> bool:
    """Coordinate-wise partial order ``a <= b``."""
    _check_dims(a, b)
    return all(x <= y for x, y in zip(a, b))


def lt(a: Sequence[int], b: Sequence[int]) -> bool:
    """Strict order: ``a_k < b_k`` for every k."""
    _check_dims(a, b)
    return all(x < y for x, y in zip(a, b))


def join(a: Sequence[int], b: Sequence[int]) -> MultiIndex:
    """Coordinate-wise maximum ``a v b``."""
    _check_dims(a, b)
    return MultiIndex(max(x, y) for x, y in zip(a, b))


def floor(x: Sequence[float]) -> MultiIndex:
    """Integer part of each coordinate (for nonnegative input this is ``[x]``)."""
    return MultiIndex(math.floor(v) for v in x)


def product(n: Sequence[int]) -> int:
    """Return ``<n> = n_1 ... n_d``; raises on nonpositive entries or int64 overflow."""
    out = 1
    for v in n:
        v = int(v)
        if v < 1:
            raise ValueError(f"product needs positive coordinates, got {tuple(n)}")
        out *= v
        if out > INT64_MAX:
            raise OverflowError(f"<n> overflows int64 for n={tuple(n)}")
    return out


@dataclass(frozen=True)
class Box:
    """Integer box ``{j : lower < j <= upper}``."""

    lower: MultiIndex
    upper: MultiIndex

    def __post_init__(self) -> None:
        lo, up = MultiIndex(self.lower), MultiIndex(self.upper)
        _check_dims(lo, up)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def of_size(cls, n: Sequence[int]) -> "Box":
        """The block U_n = {1 <= j <= n}."""
        n = as_index(n)
        return cls(MultiIndex.fill(0, n.dim), n)

    @classmethod
    def cube(cls, r: int, d: int) -> "Box":
        """The integer cube (0, r]^d."""
        return cls(MultiIndex.fill(0, d), MultiIndex.fill(r, d))

    @property
    def dim(self) -> int:
        return self.lower.dim

    @property
    def is_empty(self) -> bool:
        return not lt(self.lower, self.upper)

    @property
    def shape(self) -> tuple[int, ...]:
        if self.is_empty:
            return tuple(0 for _ in self.lower)
        return tuple(u - l for l, u in zip(self.lower, self.upper))

    @property
    def cardinality(self) -> int:
        if self.is_empty:
            return 0
        return product(self.shape)

    def contains(self, point: Sequence[int]) -> bool:
        _check_dims(point, self.lower)
        return all(l < p <= u for l, p, u in zip(self.lower, point, self.upper))

    def contains_box(self, other: "Box") -> bool:
        if other.is_empty:
            return True
        return leq(self.lower, other.lower) and leq(other.upper, self.upper)

    def intersects(self, other: "Box") -> bool:
        _check_dims(self.lower, other.lower)
        return all(
            max(l1, l2) < min(u1, u2)
            for l1, l2, u1, u2 in zip(self.lower, other.lower, self.upper, other.upper)
        )

    def local_slices(self, sub: "Box") -> tuple[slice, ...]:
        """Array slices selecting ``sub`` inside a C-ordered array laid out over this box."""
        return tuple(
            slice(s - l, t - l) for l, s, t in zip(self.lower, sub.lower, sub.upper)
        )


def enumerate_box(box: Box) -> Iterator[MultiIndex]:
    """Yield every point of ``box`` once, in lexicographic order (last axis fastest).

    The same order is used for the flat ``values`` array of a realization.
    """
    if box.is_empty:
        return
    ranges = [range(l + 1, u + 1) for l, u in zip(box.lower, box.upper)]
    for point in itertools.product(*ranges):
        yield MultiIndex(point)


def box_points(box: Box) -> np.ndarray:
    """All points of ``box`` as an ``(N, d)`` int64 array, lexicographic order."""
    if box.is_empty:
        return np.empty((0, box.dim), dtype=np.int64)
    axes = [np.arange(l + 1, u + 1, dtype=np.int64) for l, u in zip(box.lower, box.upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def dyadic(lo_exp: int, hi_exp: int, d: int = 1) -> list[MultiIndex]:
    """Diagonal dyadic schedule ``2^j * 1`` for ``j = lo_exp .. hi_exp``."""
    return [MultiIndex.fill(2**j, d) for j in range(lo_exp, hi_exp + 1)]
