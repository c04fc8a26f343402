"""Monte Carlo checks of the CLT / uniform-integrability equivalence.

Pipeline: sample ``S_n`` on ``U_n``, centre by the exact mean, normalize by
``sqrt(var S_n)`` or ``sqrt(<n> K_X(n))``, then measure the distance to the
normal law (KS, characteristic function), tabulate truncated second moments,
and evaluate the three terms bounding the characteristic-function error for a
Bernstein blocking.  Everything is finite-sample evidence about a limit
statement and is reported as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .blocking import BlockingPlan
from .covariance import k_rect, variance_exact
from .fields import FieldSampler
from .lattice import Box, MultiIndex, as_index, product
from .rng import SINGLE_BLOCK, WHOLE_BOX

__all__ = [
    "EXACT",
    "K_NORM",
    "NormalizationSpec",
    "normalized_sums",
    "ks_normal",
    "cf_distance",
    "UiTable",
    "gaussian_tail",
    "ui_table",
    "ui_diagnostic",
    "Certificate",
    "q_certificate",
    "GridPoint",
    "CltReport",
    "Thresholds",
    "Verdict",
    "clt_verdict",
    "theorem_verdict",
    "run_clt",
]

EXACT = "exact-variance"
K_NORM = "k-normalization"
DEFAULT_T_GRID = (0.5, 1.0, 2.0)
DEFAULT_C_GRID = (2.0, 4.0, 8.0)
FINITE_SAMPLE_NOTE = (
    "finite-sample evidence on a finite grid of n; the limit statement itself "
    "is not decided by simulation"
)


class NormalizationSpec:
    """How partial sums are scaled: by the exact ``sqrt(var S_n)`` or by ``sqrt(<n> K_X(n))``.

    Scales are computed from the sampler's covariance model and cached per n.
    """

    def __init__(self, mode: str = EXACT):
        if mode not in (EXACT, K_NORM):
            raise ValueError(f"unknown normalization mode {mode!r}")
        self.mode = mode
        self._cache: dict[tuple, float] = {}

    def __repr__(self) -> str:
        return f"NormalizationSpec({self.mode!r})"

    def _key(self, model, n):
        # models hash by identity; holding the object in the key pins it
        return (model, self.mode, tuple(n))

    def v(self, model, n: Sequence[int]) -> float:
        n = as_index(n, model.dimension)
        key = self._key(model, n)
        if key not in self._cache:
            if self.mode == EXACT:
                sq = variance_exact(model, n)
            else:
                sq = product(n) * k_rect(model, n)
            self._cache[key] = math.sqrt(sq)
        return self._cache[key]

    def target_variance(self, model, n: Sequence[int]) -> float:
        """Variance of the normalized sum: 1, or ``var S_n / (<n> K_X(n))``."""
        if self.mode == EXACT:
            return 1.0
        return variance_exact(model, n) / (product(as_index(n)) * k_rect(model, n))


def _raw_sums(sampler, n, replicates, seed, workers):
    box = Box.of_size(n)
    return sampler.box_sums(box, seed, replicates, WHOLE_BOX, workers)


def normalized_sums(
    sampler: FieldSampler,
    n: Sequence[int],
    spec: NormalizationSpec | str = EXACT,
    replicates: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """``(S(U_n) - <n> mean) / v_n`` for independent realizations."""
    if isinstance(spec, str):
        spec = NormalizationSpec(spec)
    n = as_index(n, sampler.dimension)
    vn = spec.v(sampler.model, n)
    if not vn > 0:
        raise ValueError("normalization v_n vanished")
    s = _raw_sums(sampler, n, replicates, seed, workers)
    return (s - product(n) * sampler.mean) / vn


def ks_normal(samples: Sequence[float], target_variance: float = 1.0) -> float:
    """Sup distance between the empirical CDF and the CDF of N(0, target_variance)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not target_variance > 0:
        raise ValueError("target_variance must be positive")
    n = x.size
    cdf = stats.norm.cdf(x / math.sqrt(target_variance))
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    return float(max(d_plus, d_minus))


def cf_distance(samples: Sequence[float], t_grid: Sequence[float] = DEFAULT_T_GRID) -> float:
    """``max_t |mean(exp(i t x)) - exp(-t^2/2)|`` over the grid."""
    x = np.asarray(samples, dtype=np.float64)
    t = np.asarray(t_grid, dtype=np.float64)
    if t.size == 0:
        raise ValueError("empty t grid")
    ecf = np.exp(1j * np.outer(t, x)).mean(axis=1)
    return float(np.max(np.abs(ecf - np.exp(-(t**2) / 2))))


# ---------------------------------------------------------------------------
# uniform integrability


@dataclass(frozen=True)
class UiTable:
    """``tails[i, j] = mean(Y^2 1{Y^2 >= c_j})`` for the samples at ``n_grid[i]``."""

    n_grid: list[MultiIndex]
    c_grid: list[float]
    tails: np.ndarray
    limit_variance: tuple = ()

    def gaussian_reference(self) -> np.ndarray:
        """Same table for exactly normal ``Y`` with the per-n limit variance (1 if unset)."""
        s2 = self.limit_variance or (1.0,) * len(self.n_grid)
        return np.array([[gaussian_tail(c, v) for c in self.c_grid] for v in s2]).reshape(self.tails.shape)

    def excess(self) -> np.ndarray:
        return self.tails - self.gaussian_reference()

    @property
    def empty(self) -> bool:
        return self.tails.size == 0

    @property
    def sup(self) -> np.ndarray:
        """Sup over the n grid, one entry per truncation level."""
        if self.empty:
            return np.zeros(len(self.c_grid))
        return self.tails.max(axis=0)

    def to_dict(self) -> dict:
        return {
            "n_grid": [list(n) for n in self.n_grid],
            "c_grid": list(self.c_grid),
            "tails": self.tails.tolist(),
            "sup": self.sup.tolist(),
            "gaussian_reference": self.gaussian_reference().tolist(),
        }


def gaussian_tail(c: float, s2: float = 1.0) -> float:
    """``E[Y^2 1{Y^2 >= c}]`` for ``Y ~ N(0, s2)``."""
    if s2 <= 0:
        return 0.0
    x = math.sqrt(c / s2)
    return s2 * 2.0 * (x * stats.norm.pdf(x) + stats.norm.sf(x))


def _tail_row(y: np.ndarray, c_grid: Sequence[float]) -> np.ndarray:
    y2 = y * y
    # masking (not compressing) keeps one summation order for every c, so the
    # row is exactly nonincreasing in c
    return np.array([np.where(y2 >= c, y2, 0.0).sum() / y2.size for c in c_grid])


def ui_table(samples_by_n: dict, c_grid: Sequence[float], limit_variance: Sequence[float] = ()) -> UiTable:
    c_grid = [float(c) for c in c_grid]
    if any(b <= a for a, b in zip(c_grid, c_grid[1:])) or any(c < 0 for c in c_grid):
        raise ValueError("c_grid must be increasing and nonnegative")
    ns = [as_index(n) for n in samples_by_n]
    rows = [_tail_row(np.asarray(samples_by_n[n]), c_grid) for n in samples_by_n]
    tails = np.array(rows) if rows else np.empty((0, len(c_grid)))
    return UiTable(ns, c_grid, tails, tuple(float(v) for v in limit_variance))


def ui_diagnostic(
    sampler: FieldSampler,
    n_grid: Sequence[Sequence[int]],
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    replicates: int = 1000,
    seed: int = 0,
    spec: NormalizationSpec | None = None,
    workers: int = 1,
) -> UiTable:
    """Truncated second moments of ``(S_n - E S_n)^2 / (<n> K_X(n))`` over an n grid."""
    spec = spec or NormalizationSpec(K_NORM)
    if spec.mode != K_NORM:
        raise ValueError("ui_diagnostic uses the K_X normalization")
    samples = {
        as_index(n): normalized_sums(sampler, n, spec, replicates, seed, workers) for n in n_grid
    }
    return ui_table(samples, c_grid)


# ---------------------------------------------------------------------------
# blocking certificate


@dataclass(frozen=True)
class Certificate:
    """Bounds on the three terms of the characteristic-function error at ``t``.

    ``q1_bound``: corridor term, ``|t| sqrt(card G_n K_X(n) / (<n> K_X(n)))``.
    ``q2_bound``: dependence between blocks, ``4 t^2 (K_X(n) - K_X(q_n)) / K_X(n)``.
    ``lindeberg_sum``: Monte Carlo value of ``sum_s E Z^2 1{|Z| > eps}`` over
    independent copies of one block sum scaled by ``v_n``.
    ``block_variance_sum``: exact ``M_n var S(U_p) / (<n> K_X(n))``, which
    should approach 1.
    """

    n: MultiIndex
    p: MultiIndex
    q: MultiIndex
    t: float
    eps: float
    q1_bound: float
    q2_bound: float
    lindeberg_sum: float
    block_variance_sum: float
    replicates: int

    def to_dict(self) -> dict:
        return {
            "n": list(self.n), "p": list(self.p), "q": list(self.q), "t": self.t,
            "eps": self.eps, "q1_bound": self.q1_bound, "q2_bound": self.q2_bound,
            "lindeberg_sum": self.lindeberg_sum,
            "block_variance_sum": self.block_variance_sum, "replicates": self.replicates,
        }


def q_certificate(
    sampler: FieldSampler,
    plan: BlockingPlan,
    t: float = 1.0,
    eps: float = 0.1,
    replicates: int = 1000,
    seed: int = 0,
    workers: int = 1,
) -> Certificate:
    if plan.dimension != sampler.dimension:
        raise ValueError("plan and sampler dimensions differ")
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    model = sampler.model
    n, p, q = plan.n, plan.p, plan.q
    size = product(n)
    kn = k_rect(model, n)
    kq = k_rect(model, q)
    if kq > kn * (1 + 1e-12):
        raise RuntimeError(f"K_X(q)={kq} exceeds K_X(n)={kn}: monotonicity broken")
    vn2 = size * kn
    q1 = abs(t) * math.sqrt(plan.corridor_cardinality * kn / vn2)
    q2 = 4 * t * t * max(kn - kq, 0.0) / kn
    m = plan.block_count
    if m == 0:
        lind, bvs = 0.0, 0.0
    else:
        # independent copies of the first block; stationarity makes the others equal in law
        y = sampler.box_sums(Box.of_size(p), seed, replicates, SINGLE_BLOCK, workers)
        y = y - product(p) * sampler.mean
        y2 = y * y
        lind = float(m / vn2 * np.where(y2 > eps * eps * vn2, y2, 0.0).mean())
        bvs = m * variance_exact(model, p) / vn2
    return Certificate(n, p, q, float(t), float(eps), q1, q2, lind, bvs, replicates)


# ---------------------------------------------------------------------------
# report and verdict


@dataclass(frozen=True)
class Thresholds:
    """Normality thresholds; ``ks`` is ``ks_scale / sqrt(N) + ks_slack``."""

    ks_scale: float = 1.63
    ks_slack: float = 0.01
    cf: float = 0.05
    ui_tail: float = 0.05
    ui_flat: float = 0.1

    def ks(self, replicates: int) -> float:
        return self.ks_scale / math.sqrt(replicates) + self.ks_slack


@dataclass(frozen=True)
class GridPoint:
    n: MultiIndex
    v_n: float
    target_variance: float
    ks_distance: float
    cf_distance: float
    sample_variance: float

    def to_dict(self) -> dict:
        return {"n": list(self.n), "v_n": self.v_n, "target_variance": self.target_variance,
                "ks_distance": self.ks_distance, "cf_distance": self.cf_distance,
                "sample_variance": self.sample_variance}


@dataclass
class CltReport:
    n: MultiIndex
    replicates: int
    mode: str
    normalized_samples: np.ndarray = field(repr=False)
    ks_distance: float
    cf_distance: float
    ui_table: UiTable
    grid: list[GridPoint] = field(default_factory=list)
    certificate: list[Certificate] = field(default_factory=list)
    t_grid: tuple = DEFAULT_T_GRID

    def to_dict(self) -> dict:
        return {
            "n": list(self.n),
            "replicates": self.replicates,
            "normalization": self.mode,
            "ks_distance": self.ks_distance,
            "cf_distance": self.cf_distance,
            "t_grid": list(self.t_grid),
            "grid": [g.to_dict() for g in self.grid],
            "ui_table": self.ui_table.to_dict(),
            "certificate": [c.to_dict() for c in self.certificate],
        }


@dataclass(frozen=True)
class Verdict:
    status: str  # consistent-with-CLT | inconsistent | inconclusive
    reasons: tuple[str, ...]

    @property
    def text(self) -> str:
        return f"{self.status}: {'; '.join(self.reasons)} ({FINITE_SAMPLE_NOTE})"


CONSISTENT = "consistent-with-CLT"
INCONSISTENT = "inconsistent"
INCONCLUSIVE = "inconclusive"


def clt_verdict(report: CltReport, thresholds: Thresholds = Thresholds()) -> Verdict:
    """Three-valued reading of a report.

    * consistent: at the largest n both distances are below threshold, and the
      UI tail at the largest c exceeds the Gaussian limit's tail by little and
      is roughly flat across n;
    * inconsistent: a distance fails at the largest n and shows no improvement
      over the smallest n (or smaller n passed and the largest fails);
    * inconclusive: everything else, including missing evidence.
    """
    grid = report.grid or [
        GridPoint(report.n, math.nan, 1.0, report.ks_distance, report.cf_distance, math.nan)
    ]
    if report.ui_table.empty:
        return Verdict(INCONCLUSIVE, ("no uniform-integrability evidence",))
    ks_thr = thresholds.ks(report.replicates)

    def passes(g):
        return g.ks_distance < ks_thr and g.cf_distance < thresholds.cf

    last, first = grid[-1], grid[0]
    tail = report.ui_table.tails[:, -1]
    # even the limit law has E[Y^2; Y^2 >= 8] ~ 0.046, so judge the excess over it
    excess = report.ui_table.excess()[:, -1]
    ui_small = float(excess.max()) < thresholds.ui_tail
    ui_flat = float(tail.max() - tail.min()) <= thresholds.ui_flat
    if passes(last) and ui_small and ui_flat:
        return Verdict(CONSISTENT, (
            f"KS {last.ks_distance:.4g} < {ks_thr:.4g} and CF {last.cf_distance:.4g} < "
            f"{thresholds.cf:g} at n={tuple(last.n)}",
            f"UI tail at c={report.ui_table.c_grid[-1]:g} is {tail.max():.4g} "
            f"(excess over the Gaussian limit {excess.max():.4g})",
        ))
    if not passes(last):
        earlier_passed = any(passes(g) for g in grid[:-1])
        no_trend = (last.ks_distance >= first.ks_distance - 1e-12
                    and last.cf_distance >= first.cf_distance - 1e-12)
        if earlier_passed or no_trend:
            return Verdict(INCONSISTENT, (
                f"KS {last.ks_distance:.4g} (threshold {ks_thr:.4g}) or CF "
                f"{last.cf_distance:.4g} (threshold {thresholds.cf:g}) fails at the "
                f"largest n={tuple(last.n)} without improving along the grid",
            ))
        return Verdict(INCONCLUSIVE, ("distances fail at the largest n but are still decreasing",))
    return Verdict(INCONCLUSIVE, (
        f"normality passes but the UI tail at c={report.ui_table.c_grid[-1]:g} is "
        f"{tail.max():.4g}, excess over the Gaussian limit {excess.max():.4g} "
        f"(small: {ui_small}, flat in n: {ui_flat})",
    ))


def run_clt(
    sampler: FieldSampler,
    n_grid: Sequence[Sequence[int]],
    mode: str = EXACT,
    replicates: int = 1000,
    seed: int = 0,
    c_grid: Sequence[float] = DEFAULT_C_GRID,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    plans: Sequence[BlockingPlan] = (),
    t_cert: float = 1.0,
    eps: float = 0.1,
    workers: int = 1,
    timer=None,
) -> CltReport:
    """Run sample -> normalize -> KS/CF -> UI table -> certificate for every n in the grid."""
    if not n_grid:
        raise ValueError("empty n grid")
    spec = NormalizationSpec(mode)
    kspec = NormalizationSpec(K_NORM)
    model = sampler.model
    grid, k_samples, k_targets = [], {}, []
    samples = None
    for n in n_grid:
        n = as_index(n, sampler.dimension)
        with _stage(timer, "sample"):
            y = normalized_sums(sampler, n, spec, replicates, seed, workers)
        with _stage(timer, "distances"):
            target = spec.target_variance(model, n)
            ks = ks_normal(y, target)
            cf = cf_distance(y / math.sqrt(target), t_grid)
            k_samples[n] = y * (spec.v(model, n) / kspec.v(model, n)) if mode == EXACT else y
            k_targets.append(kspec.target_variance(model, n))
        grid.append(GridPoint(n, spec.v(model, n), target, ks, cf, float(np.var(y, ddof=1))))
        samples = y
    with _stage(timer, "ui"):
        table = ui_table(k_samples, c_grid, k_targets)
    certs = []
    with _stage(timer, "certificate"):
        for plan in plans:
            certs.append(q_certificate(sampler, plan, t_cert, eps, replicates, seed, workers))
    last = grid[-1]
    return CltReport(last.n, replicates, mode, samples, last.ks_distance, last.cf_distance,
                     table, grid, certs, tuple(float(t) for t in t_grid))


class _stage:
    def __init__(self, timer, name):
        self.timer, self.name = timer, name

    def __enter__(self):
        if self.timer is not None:
            self.timer.start(self.name)

    def __exit__(self, *exc):
        if self.timer is not None:
            self.timer.stop(self.name)


# older public name
theorem_verdict = clt_verdict
