import math

import pytest

from rwrp import lyapunov as ly
from rwrp.errors import ValidationError


def test_zero_direction():
    pt = ly.estimate_quenched_lyapunov(1, 0.5, 0.0, (0,), [1, 2])
    assert pt.extrapolated == 0.0
    assert pt.entries == ()


def test_non_primitive_rejected():
    with pytest.raises(ValidationError):
        ly.estimate_quenched_lyapunov(2, 0.5, 0.0, (2, 4), [1])


def test_default_box_rule():
    rule = ly.default_box_rule((1, 0))
    assert rule(2) == 9
    assert ly.default_box_rule((3,))(2) == 17


def test_quenched_entries_and_envelope():
    pt = ly.estimate_quenched_lyapunov(1, 0.5, 0.0, (1,), [2, 4], replicates=60, seed=1)
    assert [e.n for e in pt.entries] == [2, 4]
    assert pt.extrapolated == min(e.value for e in pt.entries)
    for e in pt.entries:
        assert 0.0 < e.value <= ly.crude_envelope(1, 0.0, (1,))
        assert e.std_error > 0.0


def test_annealed_below_quenched():
    q = ly.estimate_quenched_lyapunov(1, 0.5, 0.0, (1,), [3], replicates=400, seed=2)
    a = ly.estimate_annealed_lyapunov(1, 0.5, 0.0, (1,), [3], estimator="env-mc",
                                      budget=400, seed=2)
    se = math.hypot(q.entries[0].std_error, a.entries[0].std_error)
    assert a.extrapolated <= q.extrapolated + 3 * se


def test_lambda_increases_exponent():
    base = ly.estimate_quenched_lyapunov(1, 0.5, 0.0, (1,), [3], replicates=100, seed=4)
    shifted = ly.estimate_quenched_lyapunov(1, 0.5, 0.5, (1,), [3], replicates=100, seed=4)
    # coupled seeds, so the comparison is pointwise
    assert shifted.extrapolated > base.extrapolated


def test_difference_profile_lower_bound():
    p, q = 0.3, 0.7
    rows = ly.lyapunov_difference_profile(1, p, q, 0.0, [(1,)], [3], replicates=300, seed=6)
    floor = (1 - math.exp(-1)) * (q - p)
    for row in rows:
        assert row["quenched_diff"] >= floor - 3 * row["quenched_se"]
        assert row["annealed_diff"] >= floor - 3 * row["annealed_se"]


def test_profile_rejects_bad_order():
    with pytest.raises(ValidationError):
        ly.lyapunov_difference_profile(1, 0.7, 0.3, 0.0, [(1,)], [2])
