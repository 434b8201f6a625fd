import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ESS = (-1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def hermitian(draw, min_n=1, max_n=6, scale=2.0, complex_=True):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, n))
    if complex_:
        x = x + 1j * r.standard_normal((n, n))
    h = 0.5 * (x + x.conj().T)
    norm = np.abs(np.linalg.eigvalsh(h)).max()
    return h * (scale / norm) if norm > 0 else h


seeds = st.integers(0, 2**32 - 1)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
