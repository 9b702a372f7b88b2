import numpy as np
import pytest

from csspa.fair_spam import SpamSyntheticSpec, build_spam_problem, generate_spam_synthetic
from csspa.quadratic import build_quadratic_problem
from csspa.reference import FullBatchEvaluator, solve_reference


def central_diff(fun, x, h=1e-6):
    """Central finite differences of a scalar or vector function; columns are outputs."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    out = np.zeros((x.size, f0.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h)
    return out


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


@pytest.fixture(scope="session")
def quad():
    return build_quadratic_problem(noise_std=0.1)


@pytest.fixture(scope="session")
def quad_exact():
    return build_quadratic_problem(noise_std=0.0)


@pytest.fixture(scope="session")
def spam_data():
    return generate_spam_synthetic(SpamSyntheticSpec())


@pytest.fixture(scope="session")
def spam_setup(spam_data):
    """Full synthetic SpAM problem (tau = 0.5), its evaluator and reference."""
    problem = build_spam_problem(spam_data, mu=0.1, tau=0.5)
    ev = FullBatchEvaluator.from_problem(problem)
    return problem, ev, solve_reference(ev, problem.feasible_set, tol=1e-6)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdicts, one line per criterion, after the run."""
    import sys
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k[2:])):
        ok, detail = results[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
