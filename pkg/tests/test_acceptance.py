"""Acceptance criteria, one test each, at their stated tolerances.

The suite runs once into ``first`` and again into ``second`` with ``first``
as the determinism reference, so every artifact is produced by two
independent runs.
"""

import pytest

from levyscale.acceptance import CRITERIA, run_suite

NUMBERS = list(range(1, len(CRITERIA) + 1)) + [10]
LINES: list[str] = []


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    first = tmp_path_factory.mktemp("first")
    second = tmp_path_factory.mktemp("second")
    run_suite(first, replay=False, log=None)
    res = run_suite(second, reference=first, log=None)
    by_number = {r.number: r for r in res}
    LINES.extend(by_number[n].line() for n in sorted(by_number))
    return by_number


@pytest.mark.parametrize("number", NUMBERS)
def test_criterion(results, number):
    r = results[number]
    print(r.line())
    assert r.passed, r.line()
