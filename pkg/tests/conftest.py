import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def randn(rng, *shape):
    return rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


dim = st.integers(min_value=1, max_value=6)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


@st.composite
def tensor_pair(draw, max_dim=6):
    """Conformable (A, B) with dims <= max_dim, drawn from a seeded Gaussian."""
    n1, n2, n3, l = (draw(st.integers(1, max_dim)) for _ in range(4))
    r = np.random.default_rng(draw(seeds))
    return r.standard_normal((n1, n2, n3)), r.standard_normal((n2, l, n3))


def rel(a, b):
    d = np.linalg.norm(np.ravel(a - b))
    return d / max(np.linalg.norm(np.ravel(b)), 1e-300)


# acceptance verdicts, echoed once more at the end of the terminal report
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
