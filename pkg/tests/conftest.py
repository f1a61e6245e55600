import numpy as np
import pytest

from rrnit import DenseOperator


def random_dense_problem(rng, m=10, n=10, scale=1.0):
    """Random well-scaled (A, x_prev, y) triple."""
    A = DenseOperator(scale * rng.standard_normal((m, n)) / np.sqrt(n))
    return A, rng.standard_normal(n), rng.standard_normal(m)


def scalar_op(a):
    return DenseOperator([[float(a)]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    def record(number, title, ok, detail):
        line = "criterion {:>2} {:<28s} {}  {}".format(number, title, "PASS" if ok else "FAIL",
                                                       detail)
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
