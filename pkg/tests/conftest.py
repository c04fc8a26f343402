import itertools

import numpy as np
import pytest

from assoc_clt.covariance import FiniteCovariance, PowerCovariance


def random_finite_model(rng, d, radius=None):
    """Random nonnegative symmetric finite-range covariance (not necessarily PSD)."""
    radius = int(rng.integers(0, 4)) if radius is None else radius
    entries = {(0,) * d: float(rng.uniform(0.5, 2.0))}
    for lag in itertools.product(range(-radius, radius + 1), repeat=d):
        if lag == (0,) * d or tuple(-c for c in lag) in entries:
            continue
        if rng.random() < 0.6:
            entries[lag] = float(rng.uniform(0.0, 1.0))
    return FiniteCovariance(d, entries)


def pair_sum(model, n):
    """Independent oracle: literal double loop over the box."""
    pts = list(itertools.product(*(range(1, v + 1) for v in n)))
    total = 0.0
    for a in pts:
        for b in pts:
            total += model(tuple(x - y for x, y in zip(a, b)))
    return total


@pytest.fixture
def harmonic():
    """d=1, R(m) = 1/(1+|m|)."""
    return PowerCovariance(1, alpha=1.0)


@pytest.fixture
def ma1():
    return FiniteCovariance(1, {(0,): 2.0, (1,): 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary: one line per criterion (tests named test_cNN_<title>)

_criteria: dict[int, tuple[str, str, float]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_c"):
        return
    if report.when == "call" or report.failed:
        number = int(name.split("_")[1][1:])
        title = " ".join(name.split("_")[2:])
        _criteria[number] = ("PASS" if report.passed else "FAIL", title, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, secs = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  ({secs:.1f} s)")
