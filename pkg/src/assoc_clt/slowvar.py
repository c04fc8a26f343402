"""Finite-range probes for slowly varying functions of several arguments.

Slow variation is a limit statement, so nothing here proves it.  The probes
report whether the ratios ``L(a*x)/L(x)`` look consistent with convergence to
1 up to the largest point inspected.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .covariance import CovarianceModel, k_rect
from .lattice import MultiIndex, as_index, dyadic, lt

__all__ = [
    "SlowVaryFn",
    "NotSlowlyVarying",
    "MonotonicityError",
    "SlowVariationReport",
    "sv_ratio_probe",
    "probe",
    "extend_to_continuum",
    "monotone_grid_check",
    "find_monotone_violation",
    "default_schedule",
    "log_product",
    "constant",
    "power_function",
    "kx_function",
]


class NotSlowlyVarying(ValueError):
    """The evaluator broke the contract of a slowly varying function (returned 0)."""


class MonotonicityError(ValueError):
    pass


@dataclass(frozen=True)
class SlowVaryFn:
    """A candidate slowly varying function ``L`` on N^d (lattice) or R^d_+ (continuum)."""

    func: Callable[[tuple], float]
    dimension: int
    domain: str = "lattice"
    name: str = "L"

    def __post_init__(self) -> None:
        if self.domain not in ("lattice", "continuum"):
            raise ValueError(f"unknown domain {self.domain!r}")

    def __call__(self, x: Sequence[float]) -> float:
        if len(x) != self.dimension:
            raise ValueError(f"{self.name} takes {self.dimension} arguments, got {len(x)}")
        if self.domain == "lattice":
            x = MultiIndex(x)
        return float(self.func(tuple(x)))


def _nonzero(L: SlowVaryFn, x) -> float:
    v = L(x)
    if v == 0:
        raise NotSlowlyVarying(f"{L.name}{tuple(x)} = 0")
    return v


def default_schedule(d: int = 1) -> list[MultiIndex]:
    """Dyadic points ``2^8 .. 2^20`` on the diagonal."""
    return dyadic(8, 20, d)


def sv_ratio_probe(
    L: SlowVaryFn, a: Sequence[float], x_schedule: Sequence[Sequence[float]]
) -> np.ndarray:
    """Return ``L(a_1 x_1, ..., a_d x_d) / L(x)`` at each schedule point."""
    a = tuple(a)
    if len(a) != L.dimension:
        raise ValueError("scaling vector has the wrong dimension")
    if any(v < 1 for v in a):
        raise ValueError("scaling vector must satisfy a >= 1")
    if L.domain == "lattice":
        a = as_index(a)
    pts = [tuple(x) for x in x_schedule]
    for prev, cur in zip(pts, pts[1:]):
        if not lt(prev, cur):
            raise ValueError("schedule must be strictly increasing coordinate-wise")
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        ax = tuple(ak * xk for ak, xk in zip(a, x))
        out[i] = _nonzero(L, ax) / _nonzero(L, x)
    return out


@dataclass(frozen=True)
class SlowVariationReport:
    a: tuple
    schedule: list
    ratios: np.ndarray = field(repr=False)
    tolerance: float

    @property
    def final_ratio(self) -> float:
        return float(self.ratios[-1])

    @property
    def consistent(self) -> bool:
        # a ratio sitting exactly on the tolerance (log at a=2, x=2^20 gives 21/20)
        # must not be flagged because of rounding
        return abs(self.final_ratio - 1.0) <= self.tolerance * (1 + 1e-9)

    @property
    def message(self) -> str:
        x_max = tuple(self.schedule[-1])
        if self.consistent:
            return f"consistent with slow variation up to x_max={x_max}"
        return (
            f"not consistent with slow variation at x_max={x_max}: "
            f"ratio {self.final_ratio:.6g} is off 1 by more than {self.tolerance:g}"
        )


def probe(
    L: SlowVaryFn,
    a: Sequence[float],
    x_schedule: Sequence[Sequence[float]] | None = None,
    tolerance: float = 0.05,
) -> SlowVariationReport:
    schedule = list(x_schedule) if x_schedule is not None else default_schedule(L.dimension)
    ratios = sv_ratio_probe(L, a, schedule)
    return SlowVariationReport(tuple(a), [tuple(x) for x in schedule], ratios, tolerance)


def find_monotone_violation(
    L: SlowVaryFn, grid_max: Sequence[int]
) -> tuple[MultiIndex, MultiIndex] | None:
    """First pair ``(n, n + e_k)`` on the grid ``1 <= n <= grid_max`` with ``L`` decreasing."""
    grid_max = as_index(grid_max, L.dimension)
    if any(g < 1 for g in grid_max):
        raise ValueError("grid_max must be >= 1")
    values: dict[tuple, float] = {}

    def ev(p):
        if p not in values:
            values[p] = L(p)
        return values[p]

    for n in itertools.product(*(range(1, g + 1) for g in grid_max)):
        for k in range(L.dimension):
            nxt = n[:k] + (n[k] + 1,) + n[k + 1 :]
            if ev(n) > ev(nxt):
                return MultiIndex(n), MultiIndex(nxt)
    return None


def monotone_grid_check(L: SlowVaryFn, grid_max: Sequence[int] | int) -> bool:
    """True iff ``L(n) <= L(n + e_k)`` for every grid point and axis."""
    return find_monotone_violation(L, as_index(grid_max, L.dimension)) is None


def _default_check_grid(d: int) -> MultiIndex:
    return MultiIndex.fill({1: 64, 2: 16}.get(d, 8), d)


def extend_to_continuum(
    L: SlowVaryFn, assume_monotone: bool, grid_max: Sequence[int] | None = None
) -> SlowVaryFn:
    """Extend a monotone lattice function to R^d_+ by ``H(x) = L([x v 1])``.

    The monotonicity hypothesis is spot-checked on a small grid; non-monotone
    input is refused rather than extended some other way.
    """
    if L.domain != "lattice":
        raise ValueError("extend_to_continuum expects a lattice function")
    if not assume_monotone:
        raise MonotonicityError(
            "extension is only defined for coordinate-wise nondecreasing L"
        )
    grid = _default_check_grid(L.dimension) if grid_max is None else as_index(grid_max)
    bad = find_monotone_violation(L, grid)
    if bad is not None:
        n, m = bad
        raise MonotonicityError(
            f"{L.name} is not nondecreasing: {L.name}{tuple(n)}={L(n):.6g} > "
            f"{L.name}{tuple(m)}={L(m):.6g}"
        )

    def H(x):
        return L.func(tuple(math.floor(max(v, 1.0)) for v in x))

    return SlowVaryFn(H, L.dimension, "continuum", f"ext({L.name})")


# ---------------------------------------------------------------------------
# stock functions


def log_product(d: int = 1, domain: str = "continuum") -> SlowVaryFn:
    """``prod_k log(x_k v 1)``."""
    return SlowVaryFn(
        lambda x: math.prod(math.log(max(v, 1.0)) for v in x), d, domain, "logprod"
    )


def constant(d: int = 1, value: float = 1.0, domain: str = "lattice") -> SlowVaryFn:
    return SlowVaryFn(lambda x: value, d, domain, "const")


def power_function(d: int = 1, beta: float = 1.0, domain: str = "continuum") -> SlowVaryFn:
    """``prod_k x_k^beta``: regularly, not slowly, varying for ``beta != 0``."""
    return SlowVaryFn(lambda x: math.prod(v**beta for v in x), d, domain, f"pow{beta:g}")


def kx_function(model: CovarianceModel) -> SlowVaryFn:
    """``n -> K_X(n)`` as a lattice function, memoized."""

    @lru_cache(maxsize=4096)
    def kx(n):
        return k_rect(model, n)

    return SlowVaryFn(kx, model.dimension, "lattice", "K_X")
