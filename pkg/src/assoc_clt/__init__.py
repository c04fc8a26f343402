"""Simulation and verification laboratory for the CLT of positively associated
stationary random fields on Z^d."""

from .blocking import BlockingPlan, BlockingSchedule, build_schedule, choose_p, partition
from .covariance import (
    DIVERGED,
    CovarianceModel,
    FiniteCovariance,
    PowerCovariance,
    ProductPowerCovariance,
    iid_model,
    k_ball_euclid,
    k_ball_sup,
    k_rect,
    variance_sandwich,
    susceptibility,
    variance_bruteforce,
    variance_exact,
)
from .fields import make_gaussian, make_iid, make_moving_average
from .lattice import Box, MultiIndex

__version__ = "0.1.0"
