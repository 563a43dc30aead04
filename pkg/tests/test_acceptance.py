"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line; the lines are also collected and
repeated in the pytest terminal summary. Criteria 5 and 8 run Monte Carlo
experiments and take a few minutes on one core. Run this file directly with
``python tests/test_acceptance.py`` for the bare report.
"""

import pytest

from ntk_transfer import checks

RESULTS = {}

CRITERIA = [
    (1, "flat-spectrum closed forms", checks.check_flat_closed_forms),
    (2, "model average ordering chain", checks.check_average_chain),
    (3, "monotone noiseless learning curves", checks.check_monotone_curves),
    (4, "sequential equals block solve", checks.check_block_equivalence),
    (5, "similarity sweep against Monte Carlo", checks.check_similarity_sweep),
    (6, "forward-transfer asymptote", checks.check_forward_asymptote),
    (7, "backward-error sandwich", checks.check_sandwich),
    (8, "self-knowledge forgetting", checks.check_self_forgetting),
    (9, "noise-driven multiple descent", checks.check_multiple_descent),
    (10, "spectral pipeline", checks.check_spectral_pipeline),
]


def report(number, title, result):
    line = f"criterion {number:2d} ({title}): {result.line()}"
    RESULTS[number] = line
    print(line)
    return result


# At N_A=2000, N_B=100, D=20 both the theory and the simulation give
# E_AB(1) < E_A: the forgetting onset for this kernel sits near N_A ~ 2900.
# The criterion is reported as FAIL and kept as a strict expected failure;
# test_forgetting_onset in test_theory.py pins where the ordering does hold.
KNOWN_RED = {8: "E_A < E_AB(1) is false at N_A=2000 in theory and simulation alike"}


def marks(number):
    if number in KNOWN_RED:
        return [pytest.mark.xfail(strict=True, reason=KNOWN_RED[number])]
    return []


@pytest.mark.parametrize("number, title, fn",
                         [pytest.param(n, t, fn, id=f"c{n:02d}", marks=marks(n))
                          for n, t, fn in CRITERIA])
def test_criterion(number, title, fn):
    result = report(number, title, fn())
    assert result.passed, result.detail


if __name__ == "__main__":
    import sys
    ok = all(report(n, t, fn()).passed for n, t, fn in CRITERIA)
    sys.exit(0 if ok else 1)
