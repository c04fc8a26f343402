"""Stationary covariance models and the lattice covariance functionals.

Three model families are provided:

* :class:`FiniteCovariance` -- finitely many nonzero lags, given as a table.
* :class:`PowerCovariance` -- ``R(m) = scale * (1 + |m|_inf) ** -alpha``.
* :class:`ProductPowerCovariance` -- ``R(m) = scale * prod_k (1 + |m_k|) ** -alpha``.

All box sums go through :meth:`CovarianceModel.weighted_box_sum`, which
evaluates ``sum_{|m_k| <= h_k} prod_k w_k(|m_k|) R(m)`` exactly (no truncation
inside the box), accumulating with ``math.fsum`` or, for long vectors,
extended-precision pairwise summation.  The power families use
shell / factorized formulas so a 1-d sum over ``2^24`` lags is one vector pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .lattice import Box, MultiIndex, as_index, box_points, product

__all__ = [
    "DIVERGED",
    "CovarianceModel",
    "FiniteCovariance",
    "PowerCovariance",
    "ProductPowerCovariance",
    "BoundViolation",
    "VarianceSandwich",
    "CovarianceSummary",
    "iid_model",
    "k_rect",
    "k_ball_euclid",
    "k_ball_sup",
    "susceptibility",
    "variance_exact",
    "variance_bruteforce",
    "set_variance",
    "set_variance_bruteforce",
    "variance_sandwich",
    "lemma2_sandwich",
    "summarize",
    "model_from_descriptor",
]

#: Returned by :func:`susceptibility` when the covariance is not summable.
DIVERGED = math.inf

BRUTEFORCE_LIMIT = 10**4
_FSUM_CUTOFF = 1 << 16


class BoundViolation(AssertionError):
    """A covariance inequality that must hold for R >= 0 failed numerically."""


def _fsum(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size <= _FSUM_CUTOFF:
        return math.fsum(a.tolist())
    # pairwise summation in 80-bit extended precision
    return float(np.sum(a, dtype=np.longdouble))


def _sym_weights(h: int, w: np.ndarray | None) -> np.ndarray:
    """Per-axis weights on lags -h..h from a table indexed by |lag|."""
    a = np.abs(np.arange(-h, h + 1))
    if w is None:
        return np.ones(2 * h + 1)
    return np.asarray(w, dtype=np.float64)[a]


class CovarianceModel:
    """Base class: a nonnegative, symmetric stationary covariance ``R`` on Z^d."""

    dimension: int
    #: sup-norm radius beyond which R vanishes, or None for an infinite tail.
    support_radius: int | None = None

    def values(self, lags: np.ndarray) -> np.ndarray:
        """Evaluate ``R`` on an integer array of shape ``(..., d)``."""
        raise NotImplementedError

    def __call__(self, m: Sequence[int] | int) -> float:
        m = as_index(m, self.dimension)
        return float(self.values(np.asarray(m, dtype=np.int64)[None, :])[0])

    def weighted_box_sum(
        self, half: Sequence[int], weights: Sequence[np.ndarray] | None = None
    ) -> float:
        raise NotImplementedError

    def susceptibility(self) -> float:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def _grid_values(self, half: Sequence[int]) -> np.ndarray:
        """Dense array of R over the lag box ``[-half, half]``."""
        axes = [np.arange(-h, h + 1, dtype=np.int64) for h in half]
        grids = np.meshgrid(*axes, indexing="ij")
        lags = np.stack(grids, axis=-1)
        return self.values(lags)

    def _check_dim(self, n: Sequence[int]) -> MultiIndex:
        return as_index(n, self.dimension)


class FiniteCovariance(CovarianceModel):
    """Covariance with finitely many nonzero lags.

    ``entries`` maps lags to values; a lag given without its mirror image is
    mirrored, and a mirror pair with different values is rejected.
    """

    def __init__(self, dimension: int, entries: Mapping[Sequence[int], float]):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)
        table: dict[MultiIndex, float] = {}
        for lag, value in entries.items():
            m = as_index(lag, self.dimension)
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite covariance at lag {tuple(m)}")
            if value < 0:
                raise ValueError(
                    f"negative covariance R{tuple(m)} = {value}; positively "
                    "associated fields need R >= 0"
                )
            neg = MultiIndex(-c for c in m)
            for key in (m, neg):
                if key in table and not math.isclose(table[key], value, rel_tol=1e-12, abs_tol=0):
                    raise ValueError(f"asymmetric covariance at lag {tuple(m)}")
                table[key] = value
        zero = MultiIndex.fill(0, self.dimension)
        if table.get(zero, 0.0) <= 0:
            raise ValueError("R(0) must be positive")
        self.entries = {k: v for k, v in table.items() if v != 0.0}
        r = max(max(abs(c) for c in k) for k in self.entries)
        self.support_radius = r
        self._table = np.zeros((2 * r + 1,) * self.dimension)
        for k, v in self.entries.items():
            self._table[tuple(c + r for c in k)] = v
        self._table.setflags(write=False)

    def __repr__(self) -> str:
        return f"FiniteCovariance(d={self.dimension}, radius={self.support_radius})"

    def values(self, lags: np.ndarray) -> np.ndarray:
        lags = np.asarray(lags, dtype=np.int64)
        r = self.support_radius
        inside = np.all(np.abs(lags) <= r, axis=-1)
        idx = np.where(inside[..., None], lags + r, 0)
        out = self._table[tuple(np.moveaxis(idx, -1, 0))]
        return np.where(inside, out, 0.0)

    def weighted_box_sum(self, half, weights=None):
        half = [int(h) for h in half]
        if any(h < 0 for h in half):
            return 0.0
        r = self.support_radius
        clip = [min(h, r) for h in half]
        sub = self._table[tuple(slice(r - c, r + c + 1) for c in clip)]
        w = 1.0
        for k, c in enumerate(clip):
            wk = _sym_weights(c, None if weights is None else weights[k][: c + 1])
            shape = [1] * self.dimension
            shape[k] = wk.size
            w = w * wk.reshape(shape)
        return _fsum(sub * w)

    def susceptibility(self) -> float:
        return math.fsum(self.entries.values())

    def descriptor(self) -> dict:
        rows = sorted([list(k) + [v] for k, v in self.entries.items()])
        return {"kind": "finite", "dimension": self.dimension, "entries": rows}


class PowerCovariance(CovarianceModel):
    """``R(m) = scale * (1 + |m|_inf) ** -alpha``.

    Summable iff ``alpha > d``.  With ``alpha = 0`` the covariance is constant.
    """

    profile = "power"

    def __init__(self, dimension: int, alpha: float, scale: float = 1.0):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        if alpha < 0 or not math.isfinite(alpha):
            raise ValueError("alpha must be finite and >= 0")
        if scale <= 0:
            raise ValueError("scale must be positive (R(0) > 0)")
        self.dimension = int(dimension)
        self.alpha = float(alpha)
        self.scale = float(scale)

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(d={self.dimension}, alpha={self.alpha}, "
            f"scale={self.scale})"
        )

    def profile_values(self, s: np.ndarray) -> np.ndarray:
        return self.scale * np.power(1.0 + np.asarray(s, dtype=np.float64), -self.alpha)

    def values(self, lags):
        lags = np.asarray(lags, dtype=np.int64)
        return self.profile_values(np.max(np.abs(lags), axis=-1))

    def weighted_box_sum(self, half, weights=None):
        half = [int(h) for h in half]
        if any(h < 0 for h in half):
            return 0.0
        smax = max(half)
        s = np.arange(smax + 1)
        # A[k][s]: weighted count of axis-k lags with |a| <= min(s, h_k);
        # inc[k][s]: the part of it with |a| == s.
        inc, A = [], []
        for k, h in enumerate(half):
            w = np.ones(h + 1) if weights is None else np.asarray(weights[k][: h + 1], float)
            mult = np.where(np.arange(h + 1) == 0, 1.0, 2.0)
            ik = np.zeros(smax + 1)
            ik[: h + 1] = w * mult
            inc.append(ik)
            A.append(np.cumsum(ik))
        # Shell weight prod A(s) - prod A(s-1), expanded as a telescoping sum
        # of nonnegative terms so no cancellation occurs.
        shell = np.zeros(smax + 1)
        for k in range(len(half)):
            term = inc[k].copy()
            for l in range(len(half)):
                if l < k:
                    prev = np.concatenate(([0.0], A[l][:-1]))
                    term *= prev
                elif l > k:
                    term *= A[l]
            shell += term
        return _fsum(self.profile_values(s) * shell)

    def susceptibility(self) -> float:
        d = self.dimension
        if self.alpha <= d:
            return DIVERGED
        # Shell s >= 1 holds (2s+1)^d - (2s-1)^d points; with u = s + 1 this is
        # a polynomial in u and each monomial sums to a Hurwitz zeta value.
        p = np.polynomial.Polynomial
        poly = p([-1, 2]) ** d - p([-3, 2]) ** d
        total = 1.0
        for j, c in enumerate(poly.coef):
            c = round(c)
            if c:
                total += c * special.zeta(self.alpha - j, 2.0)
        return self.scale * total

    def descriptor(self) -> dict:
        return {
            "kind": "radial",
            "dimension": self.dimension,
            "entries": {"profile": self.profile, "alpha": self.alpha, "scale": self.scale},
        }


class ProductPowerCovariance(PowerCovariance):
    """``R(m) = scale * prod_k (1 + |m_k|) ** -alpha``; summable iff ``alpha > 1``.

    Each factor is convex and decreasing in ``|m_k|``, so the product is
    positive definite in every dimension.
    """

    profile = "product_power"

    def values(self, lags):
        lags = np.asarray(lags, dtype=np.int64)
        return self.scale * np.prod(
            np.power(1.0 + np.abs(lags).astype(np.float64), -self.alpha), axis=-1
        )

    def weighted_box_sum(self, half, weights=None):
        half = [int(h) for h in half]
        if any(h < 0 for h in half):
            return 0.0
        out = self.scale
        for k, h in enumerate(half):
            a = np.arange(h + 1)
            w = np.ones(h + 1) if weights is None else np.asarray(weights[k][: h + 1], float)
            mult = np.where(a == 0, 1.0, 2.0)
            out *= _fsum(w * mult * np.power(1.0 + a, -self.alpha))
        return out

    def susceptibility(self) -> float:
        if self.alpha <= 1:
            return DIVERGED
        return self.scale * (1.0 + 2.0 * special.zeta(self.alpha, 2.0)) ** self.dimension


def iid_model(d: int, variance: float = 1.0) -> FiniteCovariance:
    return FiniteCovariance(d, {(0,) * d: variance})


# ---------------------------------------------------------------------------
# functionals


def k_rect(model: CovarianceModel, n: Sequence[int]) -> float:
    """K_X(n): sum of R over the box ``-n <= j <= n``."""
    n = model._check_dim(n)
    if any(v < 1 for v in n):
        raise ValueError(f"k_rect needs n >= 1, got {tuple(n)}")
    return model.weighted_box_sum(n)


def k_ball_sup(model: CovarianceModel, r: int) -> float:
    """R_X(r): sum of R over the sup-norm ball of radius r."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    return model.weighted_box_sum([int(r)] * model.dimension)


def k_ball_euclid(model: CovarianceModel, r: int) -> float:
    """K(r): sum of R over the Euclidean ball of radius r."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    r = int(r)
    if model.dimension == 1:
        return k_ball_sup(model, r)
    h = r if model.support_radius is None else min(r, model.support_radius)
    vals = model._grid_values([h] * model.dimension)
    axes = [np.arange(-h, h + 1) ** 2 for _ in range(model.dimension)]
    sq = sum(np.ix_(*axes))
    return _fsum(np.where(sq <= r * r, vals, 0.0))


def susceptibility(model: CovarianceModel) -> float:
    """Total covariance sum, or :data:`DIVERGED` (``inf``) if not summable."""
    return model.susceptibility()


def variance_exact(model: CovarianceModel, n: Sequence[int]) -> float:
    """var S(U_n) via the single weighted sum over lags ``|m| <= n - 1``."""
    n = model._check_dim(n)
    if any(v < 1 for v in n):
        raise ValueError(f"variance_exact needs n >= 1, got {tuple(n)}")
    weights = [nk - np.arange(nk, dtype=np.float64) for nk in n]
    return model.weighted_box_sum([nk - 1 for nk in n], weights)


def set_variance_bruteforce(model: CovarianceModel, points: np.ndarray) -> float:
    """Double sum of ``R(i - j)`` over all pairs of ``points`` (shape ``(N, d)``)."""
    points = np.asarray(points, dtype=np.int64).reshape(-1, model.dimension)
    if len(points) > BRUTEFORCE_LIMIT:
        raise ValueError(
            f"brute-force sum limited to {BRUTEFORCE_LIMIT} points, got {len(points)}"
        )
    rows = [_fsum(model.values(points - p)) for p in points]
    return math.fsum(rows)


def variance_bruteforce(model: CovarianceModel, n: Sequence[int]) -> float:
    """Oracle for :func:`variance_exact`: the O(<n>^2) pair sum."""
    n = model._check_dim(n)
    if product(n) > BRUTEFORCE_LIMIT:
        raise ValueError(f"<n> = {product(n)} exceeds the brute-force limit")
    return set_variance_bruteforce(model, box_points(Box.of_size(n)))


def set_variance(model: CovarianceModel, indicator: np.ndarray) -> float:
    """Variance of the sum over the set marked by a boolean array.

    Uses the lag-count identity ``sum_m R(m) #{i in G : i + m in G}`` with the
    counts taken from an FFT autocorrelation of the indicator.
    """
    ind = np.asarray(indicator, dtype=np.float64)
    if ind.ndim != model.dimension:
        raise ValueError("indicator dimension does not match the model")
    if not ind.any():
        return 0.0
    shape = [2 * s - 1 for s in ind.shape]
    axes = list(range(ind.ndim))
    f = np.fft.rfftn(ind, shape, axes=axes)
    counts = np.fft.irfftn(f * np.conj(f), shape, axes=axes)
    counts = np.rint(counts)
    # rfftn layout: lag m sits at index m mod shape; reorder to -h..h.
    counts = np.fft.fftshift(counts)
    half = [s - 1 for s in ind.shape]
    if model.support_radius is not None:
        r = model.support_radius
        clip = [min(h, r) for h in half]
        sl = tuple(slice(h - c, h + c + 1) for h, c in zip(half, clip))
        return _fsum(counts[sl] * model._grid_values(clip))
    return _fsum(counts * model._grid_values(half))


@dataclass(frozen=True)
class VarianceSandwich:
    n: MultiIndex
    c: float
    q: int
    lower: float
    exact: float
    upper: float
    k_rect: float
    converse_upper: float

    @property
    def holds(self) -> bool:
        tol = 1e-12
        return (
            self.lower <= self.exact * (1 + tol)
            and self.exact <= self.upper * (1 + tol)
            and self.k_rect <= self.converse_upper * (1 + tol)
        )


def variance_sandwich(
    model: CovarianceModel, n: Sequence[int], c: float, q: int, check: bool = True
) -> VarianceSandwich:
    """Evaluate both sides of the variance sandwich and of its converse.

    ``lower = (1-c)^d <n> K_X([cn] v 1)``, ``upper = <n> K_X(n)`` and
    ``converse_upper = (q/(q-1))^d var S(U_qn) / <qn>``, which must dominate
    ``K_X(n)``.  Raises :class:`BoundViolation` when ``check`` and any of the
    three inequalities fails.
    """
    n = model._check_dim(n)
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    if int(q) != q or q <= 1:
        raise ValueError("q must be an integer > 1")
    q = int(q)
    if any(c * v > v - 1 for v in n):
        raise ValueError(f"need c*n <= n - 1 coordinate-wise; n={tuple(n)}, c={c}")
    d = model.dimension
    size = product(n)
    cn = MultiIndex(max(math.floor(c * v), 1) for v in n)
    kn = k_rect(model, n)
    qn = MultiIndex(q * v for v in n)
    out = VarianceSandwich(
        n=n,
        c=c,
        q=q,
        lower=(1 - c) ** d * size * k_rect(model, cn),
        exact=variance_exact(model, n),
        upper=size * kn,
        k_rect=kn,
        converse_upper=(q / (q - 1)) ** d * variance_exact(model, qn) / product(qn),
    )
    if check and not out.holds:
        raise BoundViolation(f"variance sandwich fails: {out}")
    return out


@dataclass(frozen=True)
class CovarianceSummary:
    k_rect: dict[MultiIndex, float]
    k_ball: dict[int, float]
    k_sup: dict[int, float]
    susceptibility: float

    @property
    def diverged(self) -> bool:
        return math.isinf(self.susceptibility)


def summarize(
    model: CovarianceModel,
    n_grid: Sequence[Sequence[int]] = (),
    r_grid: Sequence[int] = (),
) -> CovarianceSummary:
    return CovarianceSummary(
        k_rect={as_index(n): k_rect(model, n) for n in n_grid},
        k_ball={int(r): k_ball_euclid(model, r) for r in r_grid},
        k_sup={int(r): k_ball_sup(model, r) for r in r_grid},
        susceptibility=model.susceptibility(),
    )


def model_from_descriptor(desc: Mapping) -> CovarianceModel:
    """Build a model from its JSON descriptor (see :meth:`CovarianceModel.descriptor`)."""
    kind = desc["kind"]
    d = int(desc["dimension"])
    entries = desc["entries"]
    if kind == "finite":
        table = {}
        for row in entries:
            if len(row) != d + 1:
                raise ValueError(f"finite entry {row} must hold {d} lag coordinates and a value")
            lag = tuple(row[:d])
            if lag in table:
                raise ValueError(f"duplicate lag {lag}")
            table[lag] = row[d]
        return FiniteCovariance(d, table)
    if kind == "radial":
        profile = entries["profile"]
        cls = {"power": PowerCovariance, "product_power": ProductPowerCovariance}.get(profile)
        if cls is None:
            raise ValueError(f"unknown radial profile {profile!r}")
        return cls(d, entries["alpha"], entries.get("scale", 1.0))
    raise ValueError(f"unknown covariance kind {kind!r}")


# older public name
lemma2_sandwich = variance_sandwich
