"""Acceptance criteria: one pass/fail line per criterion, tolerances pinned in wavekin.acceptance."""

import pytest

from wavekin.acceptance import CRITERIA, format_result


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i + 1}" for i in range(len(CRITERIA))])
def test_criterion(crit, capsys):
    res = crit()
    with capsys.disabled():
        print("\n" + format_result(res))
    assert res.passed, res.detail
