"""Bernstein blocking of the box U_n: corridor schedule, block size, partition."""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .covariance import (
    BRUTEFORCE_LIMIT,
    BoundViolation,
    CovarianceModel,
    k_rect,
    set_variance,
    set_variance_bruteforce,
)
from .lattice import Box, MultiIndex, as_index, leq, lt, product
from .slowvar import SlowVaryFn, extend_to_continuum

__all__ = [
    "ScheduleError",
    "BlockingSchedule",
    "BlockingPlan",
    "CorridorBound",
    "build_schedule",
    "choose_p",
    "partition",
    "corridor_variance_bound",
]

DEFAULT_CAP = 2**24


class ScheduleError(ValueError):
    pass


def _ceil_log2(v: int) -> int:
    return max(0, (int(v) - 1).bit_length())


@dataclass(frozen=True)
class BlockingSchedule:
    """Corridor widths ``q_n`` with ``q_n/n -> 0``, ``q_n -> inf``, ``L(n)/L(q_n) -> 1``.

    ``R_seq[r]`` is the shrink factor used on ``M0_seq[r] <= n < M0_seq[r+1]``
    (per axis).  Only factors whose threshold ``N_0`` was found on the dyadic
    grid up to ``cap`` are kept; a dropped factor would only take effect beyond
    ``cap``, where the schedule refuses to evaluate.
    """

    L: SlowVaryFn = field(repr=False)
    R_seq: list[MultiIndex]
    N0_seq: list[MultiIndex]
    M0_seq: list[MultiIndex]
    cap: int
    dropped: list[MultiIndex] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.L.dimension

    def shrink_factor(self, k: int, j: int) -> int:
        """``1/eps_j^(k)``: the axis-k factor in force at coordinate value ``j``."""
        thresholds = [m[k] for m in self.M0_seq]
        r = bisect.bisect_right(thresholds, j) - 1
        return self.R_seq[max(r, 0)][k]

    def epsilon(self, k: int, j: int) -> float:
        return 1.0 / self.shrink_factor(k, j)

    def q_of(self, n: Sequence[int]) -> MultiIndex:
        n = as_index(n, self.dimension)
        if any(v < 1 for v in n):
            raise ValueError("q_of needs n >= 1")
        if any(v > self.cap for v in n):
            raise ScheduleError(f"n={tuple(n)} is beyond the verified range (cap {self.cap})")
        return MultiIndex(
            max(v // self.shrink_factor(k, v), math.floor(math.log(v)), 1)
            for k, v in enumerate(n)
        )

    def p_of(self, n: Sequence[int]) -> MultiIndex:
        return choose_p(n, self.q_of(n))


def _find_n0(H, L: SlowVaryFn, R: MultiIndex, exps: list[int]) -> tuple[MultiIndex | None, float]:
    """Smallest dyadic ``N = 2^j * 1`` with ``L(n)/H(n/R) - 1 <= 1/<R>`` for all grid ``n >= N``.

    Returns ``(None, ratio_at_cap)`` when even the top grid point fails.
    """
    d = L.dimension
    thr = 1.0 / product(R)
    first_ok = 0
    top = None
    for e in itertools.product(exps, repeat=d):
        n = tuple(2**v for v in e)
        ratio = L(n) / H(tuple(nk / rk for nk, rk in zip(n, R))) - 1.0
        if min(e) == exps[-1]:
            top = ratio
        if ratio > thr:
            first_ok = max(first_ok, min(e) + 1)
    if first_ok > exps[-1]:
        return None, top
    return MultiIndex.fill(2**first_ok, d), top


def build_schedule(
    L: SlowVaryFn,
    R_seq: Sequence[Sequence[int]] | None = None,
    cap: int = DEFAULT_CAP,
    check_grid: Sequence[int] | None = None,
) -> BlockingSchedule:
    """Construct ``q_n`` for a monotone lattice function ``L``.

    ``N_0(R)`` is located by scanning the dyadic grid up to ``cap`` per
    coordinate; ``M_0(1) = N_0(R(1))`` and
    ``M_0(r+1) = (M_0(r) v N_0(R(r+1))) + 1``.  Then
    ``q_n = ([n_k / R^(k)(r_k)])_k v ([log n_k])_k v 1``.

    With ``R_seq=None`` the factors ``2^r * 1`` are used for as long as they
    can matter below ``cap``.
    """
    d = L.dimension
    H = extend_to_continuum(L, assume_monotone=True, grid_max=check_grid)
    exps = list(range(0, _ceil_log2(cap) + 1))
    cap = 2 ** exps[-1]

    if R_seq is None:
        def candidates():
            r = 1
            while 2**r <= 2 * cap:
                yield MultiIndex.fill(2**r, d)
                r += 1
        seq = candidates()
    else:
        seq = [as_index(R, d) for R in R_seq]
        if not seq:
            raise ScheduleError("R_seq is empty")
        for a, b in zip(seq, seq[1:]):
            if not lt(a, b):
                raise ScheduleError(f"R_seq must be strictly increasing: {tuple(a)} then {tuple(b)}")
        if any(v < 1 for v in seq[0]):
            raise ScheduleError("R_seq entries must be >= 1")

    Rs: list[MultiIndex] = []
    N0s: list[MultiIndex] = []
    M0s: list[MultiIndex] = []
    dropped: list[MultiIndex] = []
    for R in seq:
        if dropped:
            dropped.append(R)
            continue
        n0, top = _find_n0(H, L, R, exps)
        if n0 is None:
            if not Rs:
                raise ScheduleError(
                    f"N_0({tuple(R)}) not found up to {cap}: ratio minus one at the cap "
                    f"is {top:.6g} > 1/<R> = {1 / product(R):.6g}"
                )
            dropped.append(R)
            continue
        m0 = n0 if not M0s else MultiIndex(max(a, b) + 1 for a, b in zip(M0s[-1], n0))
        if any(v > cap for v in m0):
            dropped.append(R)
            continue
        Rs.append(R)
        N0s.append(n0)
        M0s.append(m0)
    return BlockingSchedule(L, Rs, N0s, M0s, cap, dropped if R_seq is not None else [])


def choose_p(n: Sequence[int], q: Sequence[int]) -> MultiIndex:
    """Block side ``p = clamp([sqrt(q n)], q, n)`` per axis."""
    n = as_index(n)
    q = as_index(q, n.dim)
    if not (leq(MultiIndex.fill(1, n.dim), q) and leq(q, n)):
        raise ValueError(f"need 1 <= q <= n, got q={tuple(q)}, n={tuple(n)}")
    return MultiIndex(min(max(math.isqrt(qk * nk), qk), nk) for qk, nk in zip(q, n))


@dataclass(frozen=True)
class BlockingPlan:
    """Large blocks ``U_n^(j)``, ``j in J_n``, of side ``p`` separated by corridors of width ``q``."""

    n: MultiIndex
    p: MultiIndex
    q: MultiIndex
    #: number of admissible block indices along each axis (J_n is their product)
    axis_counts: MultiIndex
    m_counts: MultiIndex

    @property
    def dimension(self) -> int:
        return self.n.dim

    @property
    def block_count(self) -> int:
        return math.prod(self.axis_counts)

    @property
    def j_set(self) -> list[MultiIndex]:
        return [
            MultiIndex(j)
            for j in itertools.product(*(range(1, c + 1) for c in self.axis_counts))
        ]

    def block(self, j: Sequence[int]) -> Box:
        lower = MultiIndex((jk - 1) * (pk + qk) for jk, pk, qk in zip(j, self.p, self.q))
        return Box(lower, lower.shift(self.p))

    @property
    def blocks(self) -> list[Box]:
        return [self.block(j) for j in self.j_set]

    @property
    def union_cardinality(self) -> int:
        return self.block_count * product(self.p)

    @property
    def corridor_cardinality(self) -> int:
        return product(self.n) - self.union_cardinality

    @cached_property
    def corridor_indicator(self) -> np.ndarray:
        """Boolean array over U_n (C order, index ``u - 1``) marking the corridor."""
        masks = []
        for nk, pk, qk, ck in zip(self.n, self.p, self.q, self.axis_counts):
            u = np.arange(nk)  # u - 1
            pos = u % (pk + qk)
            masks.append((pos < pk) & (u // (pk + qk) < ck))
        in_blocks = masks[0]
        for m in masks[1:]:
            in_blocks = np.logical_and.outer(in_blocks, m)
        return ~in_blocks

    def corridor_points(self) -> np.ndarray:
        return np.argwhere(self.corridor_indicator) + 1

    @property
    def m_lower(self) -> int:
        return math.prod(self.m_counts)

    @property
    def m_upper(self) -> int:
        return math.prod(m + 1 for m in self.m_counts)

    @property
    def corridor_bound(self) -> int:
        """``sum_k (m_k q_k + p_k + q_k) prod_{l != k} n_l``, which dominates card G_n."""
        total = 0
        for k in range(self.dimension):
            rest = math.prod(v for l, v in enumerate(self.n) if l != k)
            total += (self.m_counts[k] * self.q[k] + self.p[k] + self.q[k]) * rest
        return total

    def to_dict(self) -> dict:
        return {
            "n": list(self.n),
            "p": list(self.p),
            "q": list(self.q),
            "m_counts": list(self.m_counts),
            "block_count": self.block_count,
            "corridor_cardinality": self.corridor_cardinality,
            "bounds": {
                "m_lower": self.m_lower,
                "m_upper": self.m_upper,
                "corridor_bound": self.corridor_bound,
            },
        }


def partition(n: Sequence[int], p: Sequence[int], q: Sequence[int]) -> BlockingPlan:
    """Partition U_n into blocks ``(j_k-1)(p_k+q_k) < u_k <= j_k p_k + (j_k-1) q_k``."""
    n = as_index(n)
    p = as_index(p, n.dim)
    q = as_index(q, n.dim)
    if not (leq(MultiIndex.fill(1, n.dim), q) and leq(q, p) and leq(p, n)):
        raise ValueError(f"need 1 <= q <= p <= n, got n={tuple(n)} p={tuple(p)} q={tuple(q)}")
    counts = MultiIndex((nk + qk) // (pk + qk) for nk, pk, qk in zip(n, p, q))
    m = MultiIndex(nk // (pk + qk) for nk, pk, qk in zip(n, p, q))
    return BlockingPlan(n, p, q, counts, m)


@dataclass(frozen=True)
class CorridorBound:
    bound: float
    exact: float
    ratio_to_total: float


def corridor_variance_bound(plan: BlockingPlan, model: CovarianceModel) -> CorridorBound:
    """Compare ``var S(G_n)`` with ``card G_n * K_X(n)``.

    The exact side is a brute-force pair sum for ``<n> <= 10^4`` and a lag-count
    sum otherwise.
    """
    if plan.dimension != model.dimension:
        raise ValueError("plan and model dimensions differ")
    card = plan.corridor_cardinality
    if card == 0:
        return CorridorBound(0.0, 0.0, 0.0)
    kn = k_rect(model, plan.n)
    bound = card * kn
    if product(plan.n) <= BRUTEFORCE_LIMIT:
        exact = set_variance_bruteforce(model, plan.corridor_points())
    else:
        exact = set_variance(model, plan.corridor_indicator)
    if exact > bound * (1 + 1e-12):
        raise BoundViolation(f"corridor variance {exact} exceeds card G * K_X(n) = {bound}")
    return CorridorBound(bound, exact, bound / (product(plan.n) * kn))
