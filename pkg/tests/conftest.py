import numpy as np
import pytest
from hypothesis import settings

from robustsel.glm_core import INTERCEPT_NAME, Dataset, get_family

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_dataset(family_name="poisson-log", beta=(0.5, 0.4, -0.3, 0.0), n=64, seed=0, sigma=1.0):
    rng = np.random.default_rng(seed)
    p = len(beta)
    X = np.column_stack([np.ones(n), rng.normal(0.0, 1.0, size=(n, p - 1))])
    fam = get_family(family_name)
    eta = X @ np.asarray(beta)
    y = fam.sample(fam.h(eta), sigma, rng)
    names = (INTERCEPT_NAME,) + tuple(f"x{j + 1}" for j in range(1, p))
    return Dataset(y, X, names, intercept=True)


@pytest.fixture
def poisson_data():
    return make_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One summary line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
