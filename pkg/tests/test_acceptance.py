"""Acceptance criteria, one test per check.

Each criterion runs through the same engine as ``condaalen check`` and
prints its own PASS/FAIL line with the measured detail, so a verbose run
reads as the acceptance report. The slow Monte Carlo criteria run here
too; use ``condaalen check --quick`` for the fast subset.
"""

import pytest

from condaalen.checks import check_names, run_check


@pytest.mark.parametrize("name", check_names(quick=False))
def test_criterion(name):
    result = run_check(name)
    status = "PASS" if result.passed else "FAIL"
    print(f"{status} {name}: {result.detail} ({result.seconds:.1f}s)")
    assert result.passed, f"{name}: {result.detail}"
