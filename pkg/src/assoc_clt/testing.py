"""Test doubles that deliberately violate the CLT.

:class:`ConstantField` sets ``X_t = xi`` on the whole lattice, with ``xi`` a
random sign.  It is associated and stationary but its covariance is the
constant 1, so normalized sums never become Gaussian.  It is exposed to the
CLI (sampler kind ``"constant"``) only so the rejection path can be exercised
end to end.
"""

from __future__ import annotations

import numpy as np

from .covariance import PowerCovariance
from .fields import FieldSampler


class ConstantField(FieldSampler):
    kind = "constant"

    def __init__(self, d: int):
        self.dimension = int(d)
        # (1 + |m|)^0 == 1 for every lag
        self.model = PowerCovariance(self.dimension, alpha=0.0)

    def _realize(self, box, rng):
        xi = 1.0 if rng.integers(0, 2) else -1.0
        return np.full(box.shape, xi)

    def descriptor(self):
        return {"kind": "constant", "dimension": self.dimension}
