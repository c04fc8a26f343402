"""Seeded generators of stationary positively associated fields on finite boxes.

Association holds by construction:

* independent variables are associated;
* a moving average with nonnegative weights is a nondecreasing function of
  independent noise, hence associated;
* a Gaussian field with nonnegative covariance is associated (Pitt).

Each sampler carries the exact covariance model of the field it generates.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import signal

from .covariance import CovarianceModel, FiniteCovariance, iid_model, model_from_descriptor
from .lattice import Box, MultiIndex, as_index
from .rng import WHOLE_BOX, stream

__all__ = [
    "SynthesisError",
    "FieldSampler",
    "IidSampler",
    "MovingAverageSampler",
    "GaussianSampler",
    "Realization",
    "make_iid",
    "make_moving_average",
    "make_gaussian",
    "sample",
    "partial_sum",
    "partial_sum_exact",
    "PaDiagnostic",
    "pa_diagnostic",
    "MONOTONE_FUNCTIONS",
    "sampler_from_descriptor",
]

log = logging.getLogger(__name__)


class SynthesisError(ValueError):
    """The requested field cannot be synthesized (bad covariance or box)."""


@dataclass(frozen=True)
class Realization:
    box: Box
    values: np.ndarray = field(repr=False)  # flat, lexicographic order of the box
    seed: int
    sampler_id: str
    replicate: int = 0

    def __post_init__(self) -> None:
        if self.values.size != self.box.cardinality:
            raise ValueError("values length does not match the box cardinality")

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.box.shape)


def _run_groups(fn: Callable[[int], list], n_groups: int, workers: int) -> list:
    if workers <= 1 or n_groups <= 1:
        return [fn(g) for g in range(n_groups)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_groups)))


class FieldSampler:
    """A stationary field law restricted to finite boxes.

    Replicate ``r`` is drawn from the stream keyed ``(seed, r // group_size,
    block)``; samplers that produce several independent realizations per
    stream (the Gaussian one yields two per FFT) set ``group_size``.
    """

    kind: str = "abstract"
    group_size: int = 1
    dimension: int
    model: CovarianceModel
    mean: float = 0.0

    def _realize(self, box: Box, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _realize_group(self, box: Box, seed: int, group: int, block: int) -> list[np.ndarray]:
        return [self._realize(box, stream(seed, group, block))]

    def check_box(self, box: Box) -> None:
        if box.dim != self.dimension:
            raise SynthesisError(f"box dimension {box.dim} != field dimension {self.dimension}")

    def descriptor(self) -> dict:
        raise NotImplementedError

    @property
    def sampler_id(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True, separators=(",", ":"))

    def sample(self, box: Box, seed: int, replicate: int = 0, block: int = WHOLE_BOX) -> Realization:
        self.check_box(box)
        group, slot = divmod(replicate, self.group_size)
        arr = self._realize_group(box, seed, group, block)[slot]
        return Realization(box, np.ascontiguousarray(arr).ravel(), seed, self.sampler_id, replicate)

    def replicates(
        self,
        box: Box,
        seed: int,
        count: int,
        reducer: Callable[[np.ndarray], float] = np.sum,
        block: int = WHOLE_BOX,
        workers: int = 1,
    ) -> np.ndarray:
        """``reducer`` applied to ``count`` independent realizations, in replicate order."""
        self.check_box(box)
        if count < 1:
            raise ValueError("need at least one replicate")
        if box.is_empty:
            return np.zeros(count)
        n_groups = -(-count // self.group_size)

        def work(g):
            return [float(reducer(a)) for a in self._realize_group(box, seed, g, block)]

        out = [v for chunk in _run_groups(work, n_groups, workers) for v in chunk]
        return np.asarray(out[:count])

    def box_sums(self, box: Box, seed: int, count: int, block: int = WHOLE_BOX, workers: int = 1) -> np.ndarray:
        return self.replicates(box, seed, count, np.sum, block, workers)


class IidSampler(FieldSampler):
    kind = "iid"

    def __init__(self, d: int, variance: float, law: str = "normal"):
        if not variance > 0:
            raise ValueError("variance must be positive")
        if law not in ("normal", "uniform"):
            raise ValueError(f"unknown law {law!r}")
        self.dimension = int(d)
        self.variance = float(variance)
        self.law = law
        self.model = iid_model(self.dimension, self.variance)

    @property
    def bound(self) -> float | None:
        """Almost-sure bound on |X_t| (uniform law only)."""
        return math.sqrt(3 * self.variance) if self.law == "uniform" else None

    def _realize(self, box, rng):
        if self.law == "normal":
            return rng.standard_normal(box.shape) * math.sqrt(self.variance)
        b = self.bound
        return rng.uniform(-b, b, box.shape)

    def descriptor(self):
        return {"kind": "iid", "dimension": self.dimension, "variance": self.variance, "law": self.law}


class MovingAverageSampler(FieldSampler):
    """``X_t = sum_j c_j eps_{t-j}`` with iid Gaussian noise and ``c_j >= 0``."""

    kind = "ma"

    def __init__(self, d: int, kernel: Mapping[Sequence[int], float], noise_variance: float = 1.0):
        self.dimension = int(d)
        if not noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        items = {as_index(k, self.dimension): float(v) for k, v in kernel.items()}
        if not items:
            raise ValueError("empty kernel")
        for k, v in items.items():
            if v < 0 or not math.isfinite(v):
                raise ValueError(
                    f"kernel entry c{tuple(k)} = {v}: weights must be finite and >= 0"
                )
        if not any(v > 0 for v in items.values()):
            raise ValueError("kernel is identically zero")
        self.kernel = items
        self.noise_variance = float(noise_variance)
        self._lo = MultiIndex(min(k[i] for k in items) for i in range(self.dimension))
        hi = MultiIndex(max(k[i] for k in items) for i in range(self.dimension))
        shape = tuple(h - l + 1 for l, h in zip(self._lo, hi))
        dense = np.zeros(shape)
        for k, v in items.items():
            dense[tuple(a - l for a, l in zip(k, self._lo))] = v
        dense.setflags(write=False)
        self._dense = dense
        self.model = self._autocovariance()

    def _autocovariance(self) -> FiniteCovariance:
        # R(m) = s^2 sum_j c_j c_{j+m}
        ac = signal.correlate(self._dense, self._dense, mode="full", method="direct")
        ac = ac * self.noise_variance
        centre = [s - 1 for s in self._dense.shape]
        entries = {}
        for idx in zip(*np.nonzero(ac > 0)):
            lag = tuple(int(i) - c for i, c in zip(idx, centre))
            if lag not in entries and tuple(-v for v in lag) not in entries:
                entries[lag] = float(ac[idx])
        return FiniteCovariance(self.dimension, entries)

    def _realize(self, box, rng):
        pad = [s - 1 for s in self._dense.shape]
        noise = rng.standard_normal(tuple(n + p for n, p in zip(box.shape, pad)))
        noise *= math.sqrt(self.noise_variance)
        return signal.convolve(noise, self._dense, mode="valid")

    def descriptor(self):
        rows = sorted(list(k) + [v] for k, v in self.kernel.items())
        return {"kind": "ma", "dimension": self.dimension, "kernel": rows,
                "noise_variance": self.noise_variance}


class GaussianSampler(FieldSampler):
    """Exact stationary Gaussian field by circulant embedding on a torus.

    The covariance is wrapped onto the torus (lag ``k`` read as ``k - N`` past
    ``N/2``), its spectrum is computed by FFT, and each FFT of spectrally
    weighted complex noise yields two independent realizations (real and
    imaginary parts).  Boxes may span at most a quarter of the torus per axis.
    """

    kind = "gaussian"
    group_size = 2
    OVERSAMPLING = 4
    NEG_TOL = 1e-9

    def __init__(self, model: CovarianceModel, torus_size: Sequence[int], mean: float = 0.0):
        self.model = model
        self.dimension = model.dimension
        self.torus = as_index(torus_size, self.dimension)
        if any(t < 2 for t in self.torus):
            raise SynthesisError("torus sides must be >= 2")
        self.mean = float(mean)
        axes = [np.where(np.arange(t) <= t // 2, np.arange(t), np.arange(t) - t) for t in self.torus]
        lags = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        c = model.values(lags)
        if np.any(c < 0):
            raise SynthesisError("covariance takes negative values; R >= 0 is required")
        # symmetrize c(k) and c(-k mod N); only lags beyond N/2 can differ
        mirror = np.roll(np.flip(c), 1, axis=tuple(range(self.dimension)))
        c = 0.5 * (c + mirror)
        lam = np.fft.fftn(c).real
        lam_max = float(lam.max())
        lam_min = float(lam.min())
        if lam_min < -self.NEG_TOL * lam_max:
            raise SynthesisError(
                f"not embeddable at this torus size (min eigenvalue {lam_min:.3g}, "
                f"max {lam_max:.3g}); increase torus"
            )
        if lam_min < 0:
            log.warning("clipping circulant eigenvalues down to %.3g to zero", lam_min)
        self.min_eigenvalue = lam_min
        amp = np.sqrt(np.clip(lam, 0.0, None) / lam.size)
        amp.setflags(write=False)
        self._amp = amp

    @property
    def max_box(self) -> MultiIndex:
        return MultiIndex(t // self.OVERSAMPLING for t in self.torus)

    def check_box(self, box):
        super().check_box(box)
        if any(s > m for s, m in zip(box.shape, self.max_box)):
            raise SynthesisError(
                f"box shape {box.shape} exceeds the synthesis range {tuple(self.max_box)} "
                f"(torus {tuple(self.torus)} / {self.OVERSAMPLING})"
            )

    def _realize_group(self, box, seed, group, block):
        rng = stream(seed, group, block)
        shape = tuple(self.torus)
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        y = np.fft.fftn(self._amp * z)
        idx = np.ix_(*[(l + 1 + np.arange(s)) % t for l, s, t in zip(box.lower, box.shape, self.torus)])
        y = y[idx]
        return [y.real + self.mean, y.imag + self.mean]

    def descriptor(self):
        return {"kind": "gaussian", "model": self.model.descriptor(),
                "torus": list(self.torus), "mean": self.mean}


def make_iid(d: int, variance: float, law: str = "normal") -> IidSampler:
    return IidSampler(d, variance, law)


def make_moving_average(
    d: int, kernel: Mapping[Sequence[int], float], noise_variance: float = 1.0
) -> MovingAverageSampler:
    return MovingAverageSampler(d, kernel, noise_variance)


def make_gaussian(model: CovarianceModel, torus_size: Sequence[int], mean: float = 0.0) -> GaussianSampler:
    return GaussianSampler(model, torus_size, mean)


def sample(sampler: FieldSampler, box: Box, seed: int, replicate: int = 0) -> Realization:
    return sampler.sample(box, seed, replicate)


def _sub_values(real: Realization, sub: Box) -> np.ndarray:
    if sub.is_empty:
        return np.empty(0)
    if not real.box.contains_box(sub):
        raise ValueError(f"{sub} is not contained in the realization box {real.box}")
    return real.as_array()[real.box.local_slices(sub)].ravel()


def partial_sum(real: Realization, sub: Box) -> float:
    """``S(sub)``, correctly rounded (``math.fsum``)."""
    return math.fsum(_sub_values(real, sub).tolist())


def partial_sum_exact(real: Realization, sub: Box) -> Fraction:
    """``S(sub)`` in exact rational arithmetic."""
    return sum((Fraction(v) for v in _sub_values(real, sub).tolist()), Fraction(0))


# ---------------------------------------------------------------------------
# PA falsification probe

MONOTONE_FUNCTIONS: dict[str, Callable[[np.ndarray, float], np.ndarray]] = {
    "identity": lambda x, s: x,
    "clip": lambda x, s: np.clip(x, -s, s),
    "tanh": lambda x, s: np.tanh(x / s),
    "smooth_step": lambda x, s: 0.5 * (1.0 + np.tanh(x / s)),
}


def _monotone(desc) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(desc, str):
        name, scale = desc, 1.0
    else:
        name, scale = desc["name"], float(desc.get("scale", 1.0))
    if name not in MONOTONE_FUNCTIONS or scale <= 0:
        raise ValueError(f"unknown monotone test function {desc!r}")
    h = MONOTONE_FUNCTIONS[name]
    # f(x_1..x_m) = h(x_1 + ... + x_m): nondecreasing in every argument
    return lambda block: h(block.sum(axis=-1), scale)


@dataclass(frozen=True)
class PaDiagnostic:
    estimate: float
    stderr: float
    replicates: int

    @property
    def consistent(self) -> bool:
        return self.estimate >= -3.0 * self.stderr

    @property
    def verdict(self) -> str:
        return "consistent with PA" if self.consistent else "significant negative covariance"


def pa_diagnostic(
    sampler: FieldSampler,
    s_set: Sequence[Sequence[int]],
    t_set: Sequence[Sequence[int]],
    f="clip",
    g="clip",
    replicates: int = 10_000,
    seed: int = 0,
    workers: int = 1,
) -> PaDiagnostic:
    """Monte Carlo estimate of ``cov(f(X_s), g(X_t))`` over disjoint index sets."""
    s_pts = [as_index(p, sampler.dimension) for p in s_set]
    t_pts = [as_index(p, sampler.dimension) for p in t_set]
    if not s_pts or not t_pts:
        raise ValueError("index sets must be nonempty")
    if set(s_pts) & set(t_pts):
        raise ValueError("index sets must be disjoint")
    if replicates < 2:
        raise ValueError("need at least two replicates")
    pts = np.array(s_pts + t_pts)
    box = Box(MultiIndex(pts.min(axis=0) - 1), MultiIndex(pts.max(axis=0)))
    local = pts - (np.array(box.lower) + 1)
    fs, gs = _monotone(f), _monotone(g)
    m = len(s_pts)
    # one replicate produces the pair (f, g) packed as a complex number
    def reducer(arr):
        vals = arr[tuple(local.T)]
        return complex(fs(vals[:m]), gs(vals[m:]))

    sampler.check_box(box)
    n_groups = -(-replicates // sampler.group_size)

    def work(gidx):
        return [reducer(a) for a in sampler._realize_group(box, seed, gidx, WHOLE_BOX)]

    z = np.array([v for chunk in _run_groups(work, n_groups, workers) for v in chunk][:replicates])
    u, v = z.real, z.imag
    prod = (u - u.mean()) * (v - v.mean())
    n = len(prod)
    est = float(prod.sum() / (n - 1))
    stderr = float(prod.std(ddof=1) / math.sqrt(n))
    return PaDiagnostic(est, stderr, n)


def sampler_from_descriptor(desc: Mapping) -> FieldSampler:
    kind = desc["kind"]
    if kind == "iid":
        return make_iid(desc["dimension"], desc.get("variance", 1.0), desc.get("law", "normal"))
    if kind == "ma":
        d = desc["dimension"]
        kernel = {}
        for row in desc["kernel"]:
            if len(row) != d + 1:
                raise ValueError(f"kernel row {row} must hold {d} lag coordinates and a weight")
            kernel[tuple(row[:d])] = row[d]
        return make_moving_average(d, kernel, desc.get("noise_variance", 1.0))
    if kind == "gaussian":
        model = model_from_descriptor(desc["model"])
        return make_gaussian(model, desc["torus"], desc.get("mean", 0.0))
    if kind == "constant":
        from .testing import ConstantField

        return ConstantField(desc["dimension"])
    raise ValueError(f"unknown sampler kind {kind!r}")
