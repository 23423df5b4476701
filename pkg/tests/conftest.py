import sys

import numpy as np
import pytest

from wlogit.core import Dataset


def make_data(n, p, seed, scale=1.0, beta=None):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p)) * scale
    if beta is None:
        beta = np.zeros(p)
        beta[: min(3, p)] = [1.5, -1.0, 0.5][: min(3, p)]
    prob = 1 / (1 + np.exp(-x @ beta))
    y = (rng.random(n) < prob).astype(float)
    # keep both classes present
    y[0], y[1] = 0.0, 1.0
    return Dataset(x, y)


@pytest.fixture
def small_data():
    return make_data(40, 6, 7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
