"""Release gate: one test per acceptance check, each printing its verdict line.

Run with `pytest -v -s tests/test_acceptance.py` to see the PASS/FAIL lines;
the same checks back `rwrp verify`.
"""

import pytest

from rwrp import acceptance


@pytest.fixture(scope="module", autouse=True)
def _warm():
    acceptance.warm_up()


def _gate(check):
    result = check()
    print(result.line)
    assert result.passed, result.detail


def test_01_closed_form_solves():
    _gate(acceptance.check_closed_form_solves)


def test_02_russo_identity():
    _gate(acceptance.check_russo_identity)


def test_03_quenched_lower_bound_grid():
    _gate(acceptance.check_quenched_lower_bound_grid)


def test_04_annealed_derivative_identity():
    _gate(acceptance.check_annealed_derivative_identity)


def test_05_estimator_triangle():
    _gate(acceptance.check_estimator_triangle)


def test_06_expected_range_bounds():
    _gate(acceptance.check_expected_range_bounds)


def test_07_flip_ratio_bound():
    _gate(acceptance.check_flip_ratio_bound)


def test_08_monotone_coupling():
    _gate(acceptance.check_monotone_coupling)


def test_09_lyapunov_schedule():
    _gate(acceptance.check_lyapunov_schedule)


def test_10_rate_function_transfer():
    _gate(acceptance.check_rate_function_transfer)


def test_11_determinism():
    _gate(acceptance.check_determinism)


def test_12_performance_floor():
    _gate(acceptance.check_performance_floor)
