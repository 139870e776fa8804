import numpy as np
import pytest
from hypothesis import settings

from schoenberg.measure import LabeledDataset, ParticleEnsemble, RandomSource, SupportInterval

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def unit_support():
    return SupportInterval(0.0, 1.0)


def make_dataset(n, d, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) / np.sqrt(d)
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[-1] = 1.0, -1.0
    return LabeledDataset(x, y)


def make_ensemble(n, seed=0, upper=2.0):
    sup = SupportInterval(0.0, upper)
    return ParticleEnsemble.uniform(n, sup, RandomSource(seed))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one verdict line per acceptance criterion."""
    def emit(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
