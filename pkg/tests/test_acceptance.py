"""Acceptance criteria: one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the table.
"""

import pytest

from spiral_euler.selfcheck import CHECKS, run_check


@pytest.mark.parametrize("number", sorted(CHECKS), ids=lambda n: f"{n:02d}-{CHECKS[n][0]}")
def test_acceptance_criterion(number):
    result = run_check(number)
    print(result.line())
    assert result.passed, result.line()
