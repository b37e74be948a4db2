"""Acceptance gate: every criterion at its stated tolerance and runtime budget.

Each test prints one PASS/FAIL line (visible with ``-s``); the same lines are
repeated in the terminal summary.
"""
import json

import pytest

from nlparabolic.acceptance import CRITERIA, run_criterion

from conftest import ACCEPTANCE_LINES


@pytest.mark.slow
@pytest.mark.parametrize("cid", sorted(CRITERIA))
def test_criterion(cid):
    res = run_criterion(cid)
    line = res.line()
    ACCEPTANCE_LINES.append((cid, line))
    print(line)
    assert res.passed, f"{line}\n{json.dumps(res.details, indent=1, default=str)[:4000]}"
    assert res.within_budget, line
