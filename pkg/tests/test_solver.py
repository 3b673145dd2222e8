import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwrp.environment import constant_environment, from_values, sample_environment
from rwrp.errors import ValidationError
from rwrp.lattice import build_box
from rwrp.solver import (
    e0_table,
    expected_quenched_cost,
    expected_range,
    flip_log_ratio,
    flip_ratio_table,
    hit_before_probability,
    load_field_dump,
    quenched_cost,
    range_upper_bound_constant,
    return_weight_psi,
    russo_rhs,
    save_field,
    solve_travel_field,
)

E1 = math.exp(-1.0)

# d=1, N=1, y=1 closed forms:
#   flat zero potential:  u(0) = 2/3, u(-1) = 1/3
#   flat unit potential:  u(0) = (e^{-1}/2) / (1 - e^{-2}/4)
U0_FREE = 2.0 / 3.0
U0_UNIT = (E1 / 2.0) / (1.0 - math.exp(-2.0) / 4.0)


def test_closed_form_free():
    box = build_box(1, 1)
    field = solve_travel_field(box, constant_environment(box, 0), (1,))
    assert field.value_at((0,)) == pytest.approx(U0_FREE, rel=1e-10)
    assert field.value_at((-1,)) == pytest.approx(1.0 / 3.0, rel=1e-10)
    assert field.value_at((1,)) == 1.0


def test_closed_form_unit_potential():
    box = build_box(1, 1)
    field = solve_travel_field(box, constant_environment(box, 1), (1,))
    assert field.value_at((0,)) == pytest.approx(U0_UNIT, rel=1e-10)


def test_cost_is_minus_log():
    box = build_box(1, 1)
    env = constant_environment(box, 0)
    assert quenched_cost(box, env, (1,)) == pytest.approx(-math.log(U0_FREE), rel=1e-10)
    assert quenched_cost(box, env, (0,)) == 0.0


def test_lambda_shift_equals_unit_potential():
    # omega = 0 with lambda = 1 weighs paths exactly like omega = 1
    box = build_box(1, 2)
    a = quenched_cost(box, constant_environment(box, 0), (2,), lam=1.0)
    b = quenched_cost(box, constant_environment(box, 1), (2,))
    assert a == pytest.approx(b, rel=1e-12)


def test_hit_before_hand_value():
    box = build_box(1, 1)
    env = constant_environment(box, 0)
    # P(H(-1) < H(1)) = w(0) u(-1) / u(0) = (1/2)(1/3)/(2/3)
    assert hit_before_probability(box, env, (1,), (-1,)) == pytest.approx(0.25, rel=1e-10)
    assert hit_before_probability(box, env, (1,), (0,)) == 1.0
    assert hit_before_probability(box, env, (1,), (1,)) == 0.0


def test_expected_range_hand_value():
    box = build_box(1, 1)
    env = constant_environment(box, 0)
    assert expected_range(box, env, (1,)) == pytest.approx(1.25, rel=1e-10)


def test_expected_range_at_least_origin():
    box = build_box(2, 3)
    env = sample_environment(box, 0.5, 8)
    assert expected_range(box, env, (2, 0)) >= 1.0


def test_return_weight_hand_value():
    box = build_box(1, 1)
    env = constant_environment(box, 0)
    # v(+-1) = 1/2 each, return probability 1/2, psi = 2
    assert return_weight_psi(box, env, (0,)) == pytest.approx(2.0, rel=1e-10)


def test_cost_does_not_depend_on_omega_at_target():
    box = build_box(1, 2)
    base = from_values(box, [0, 1, 0, 1, 0])
    alt = from_values(box, [0, 1, 0, 1, 1])  # only omega(y) differs
    y = (2,)
    assert quenched_cost(box, base, y) == quenched_cost(box, alt, y)


def test_cost_monotone_in_potential():
    box = build_box(1, 2)
    lo = from_values(box, [0, 0, 0, 0, 0])
    hi = from_values(box, [0, 1, 0, 1, 0])
    assert quenched_cost(box, hi, (2,)) >= quenched_cost(box, lo, (2,))


def test_cost_decreases_with_box_size():
    # a bigger box admits more paths, so e_N grows and a_N shrinks
    env_small = constant_environment(build_box(1, 2), 1)
    env_large = constant_environment(build_box(1, 4), 1)
    a2 = quenched_cost(env_small.box, env_small, (2,))
    a4 = quenched_cost(env_large.box, env_large, (2,))
    assert a4 <= a2 + 1e-12


@given(seed=st.integers(0, 2**32), r=st.floats(0.2, 0.8))
@settings(max_examples=15, deadline=None)
def test_flip_bound_property(seed, r):
    # |log e(flipped)/e| <= 4 psi P(hit z before y), z by z
    box = build_box(1, 3)
    env = sample_environment(box, r, seed)
    y = (2,)
    zs = [(-1,), (0,), (1,)]
    for row in flip_ratio_table(box, env, y, zs):
        assert abs(row["log_ratio"]) <= row["bound_rhs"] + 1e-9


def test_flip_log_ratio_sign():
    # flipping a zero up to one can only increase the cost
    box = build_box(1, 2)
    env = constant_environment(box, 0)
    rep = flip_log_ratio(box, env, (2,), (0,))
    assert rep.omega_at_z == 0
    assert rep.log_ratio <= 0.0


def test_e0_table_and_expected_cost():
    box = build_box(1, 1)
    e0, relevant = e0_table(box, (1,))
    assert len(relevant) == 2
    assert e0.shape == (4,)
    # mask with both sites at zero potential is the free field
    assert e0[0] == pytest.approx(U0_FREE, rel=1e-10)
    # manual average at r = 0.5: each environment weighs 1/4
    mean, _ = expected_quenched_cost(box, (1,), 0.5)
    manual = -0.25 * sum(np.log(e0))
    # E[a] is the mean of -log e, not -log of the mean
    assert mean == pytest.approx(manual, rel=1e-10)


def test_russo_exact_matches_analytic_derivative():
    for d, N, y in ((1, 2, (2,)), (2, 1, (1, 0))):
        box = build_box(d, N)
        for r in (0.2, 0.5, 0.8):
            _, deriv = expected_quenched_cost(box, y, r)
            assert russo_rhs(box, r, y) == pytest.approx(-deriv, rel=1e-12)


def test_russo_mc_agrees_roughly():
    box = build_box(1, 1)
    exact = russo_rhs(box, 0.5, (1,))
    mc = russo_rhs(box, 0.5, (1,), estimator="mc", budget=300, seed=4)
    assert mc == pytest.approx(exact, rel=0.15)


def test_range_constant_formula():
    want = (1 + math.log(4)) / (-math.log(E1 + (1 - E1) * 0.3))
    assert range_upper_bound_constant(2, 0.3) == want


def test_field_dump_round_trip(tmp_path):
    box = build_box(1, 2)
    env = sample_environment(box, 0.5, 3)
    field = solve_travel_field(box, env, (2,))
    path = tmp_path / "field.txt"
    save_field(field, path)
    mantissa, log_scale = load_field_dump(path)
    assert np.array_equal(mantissa, field.mantissa)
    assert log_scale == field.log_scale


def test_negative_lambda_rejected():
    box = build_box(1, 1)
    with pytest.raises(ValidationError):
        solve_travel_field(box, constant_environment(box, 0), (1,), lam=-0.1)
