import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rembo.embedding import Embedding

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# the one-dimensional embedding of the two-dimensional square used throughout
LINE_A = np.array([[0.5], [0.2]])


@pytest.fixture
def line_emb():
    return Embedding.from_matrix(LINE_A)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, echoed after the run so they survive output capture
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
