import math

import pytest

from tapfe.mixture import MixtureSpec


@pytest.fixture
def sk_ht():
    """SK at beta=0.3, h=0.3: replica symmetric."""
    return MixtureSpec.sk(0.3, 0.3)


@pytest.fixture
def sk_ht0():
    return MixtureSpec.sk(0.3, 0.0)


@pytest.fixture
def mixed():
    return MixtureSpec({2: 0.5, 3: 0.3}, 0.2)


# Frozen by an independent bisection on q = E tanh^2(h + z sqrt(xi'(q))) with scipy quad.
Q_STAR_SK_HT = 0.09036023543722
LOG2 = math.log(2.0)


# One pass/fail line per acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
