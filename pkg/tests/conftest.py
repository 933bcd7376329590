import numpy as np
import pytest
from hypothesis import settings

from photothermal.domain import Ball, Cube, voxelize
from photothermal.maxwell import discretization

settings.register_profile("pkg", max_examples=40, deadline=None)
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def ball8():
    return discretization(voxelize(Ball(), 8))


@pytest.fixture(scope="session")
def ball12():
    return voxelize(Ball(), 12)


@pytest.fixture(scope="session")
def cube6():
    return voxelize(Cube(), 6)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


# acceptance outcomes, one entry per checked part, printed after the run
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, label, ok, detail):
        ACCEPTANCE.setdefault(number, []).append((label, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {number} {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{label} {'ok' if good else 'FAIL'} ({d})" for label, good, d in parts)
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
