"""One test per acceptance criterion; each prints its own PASS/FAIL line.

The tolerances live in kpz_ldp.acceptance so that ``kpz-ldp selftest`` and
this file measure exactly the same thing. The lines are repeated in the
terminal summary under "acceptance criteria".
"""

import pytest

from conftest import ACCEPTANCE_LINES
from kpz_ldp.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda n: f"criterion_{n:02d}_{CRITERIA[n][0].replace(' ', '_')}")
def test_criterion(number):
    rep = run_criterion(number)
    ACCEPTANCE_LINES[number] = rep.line()
    print(rep.line())
    assert rep.passed, rep.line()
