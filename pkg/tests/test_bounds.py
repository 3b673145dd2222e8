import math

import pytest

from rwrp import bounds as bd
from rwrp.errors import ValidationError


BACKEND = bd.ExactBackend(1)


def test_rate_zero_at_origin():
    rv = bd.rate_function(1, 0.5, (0.0,))
    assert rv.value == 0.0
    assert rv.supremizer == 0.0
    assert rv.evaluations == 0


def test_rate_boundary_rejected():
    for x in ((1.0,), (1.3,), (0.6, 0.4)):
        with pytest.raises(ValidationError):
            bd.rate_function(len(x), 0.5, x)


def test_rate_above_lambda_zero_slice():
    x = (0.5,)
    rv = bd.rate_function(1, 0.5, x, backend=BACKEND)
    a0, _ = BACKEND.exponent(bd.QUENCHED, 0.5, 0.0, (1,))
    assert rv.value >= 0.5 * a0 - 1e-12
    assert rv.evaluations <= 60


def test_rate_monotone_in_r():
    x = (0.5,)
    vals = [bd.rate_function(1, r, x, backend=BACKEND).value for r in (0.3, 0.5, 0.8)]
    assert vals[0] >= vals[1] >= vals[2]


def test_rate_monotone_along_ray():
    vals = [bd.rate_function(1, 0.5, (c,), backend=BACKEND).value for c in (0.2, 0.5, 0.8)]
    assert vals[0] <= vals[1] <= vals[2]


def test_supremizer_moves_out_with_speed():
    slow = bd.rate_function(1, 0.5, (0.3,), backend=BACKEND)
    fast = bd.rate_function(1, 0.5, (0.9,), backend=BACKEND)
    assert fast.supremizer >= slow.supremizer
    assert fast.supremizer != bd.AT_BRACKET_MAX


def test_direction_split():
    scale, v = bd._direction_and_scale((0.5, -0.25))
    assert v == (2, -1)
    assert scale == pytest.approx(0.25)
    assert bd._direction_and_scale((0.0, 0.0)) == (0.0, (0, 0))


def test_quenched_bound_report():
    lower, upper = bd.check_quenched_bounds(1, 0.2, 0.6, ys=[(1,), (2,)],
                                            backend=bd.ExactBackend(1, n=1))
    assert lower.bound_id == bd.QL_LOWER
    assert not lower.failed
    assert all(c.verdict == bd.PASS for c in lower.cells)
    assert lower.worst_margin >= 0.0
    # the measured Lipschitz ratio is finite and positive
    assert all(c.measured > 0 for c in upper.cells)


def test_quenched_bound_p_equals_q():
    lower, _ = bd.check_quenched_bounds(1, 0.4, 0.4, ys=[(1,)],
                                        backend=bd.ExactBackend(1, n=1))
    cell = lower.cells[0]
    assert cell.measured == 0.0
    assert cell.bound == 0.0
    assert cell.verdict == bd.PASS


def test_annealed_bound_reports():
    reports = bd.check_annealed_bounds(1, 0.2, 0.6, ys=[(2,)],
                                       backend=bd.ExactBackend(1, n=1))
    by_id = {rep.bound_id: rep for rep in reports}
    assert not by_id[bd.AL_LOWER].failed
    assert not by_id[bd.AL_UPPER_LOG].failed
    assert bd.AL_UPPER_LIN_D3 not in by_id  # d < 3


def test_lipschitz_ratio_stable_in_q():
    # the measured Lipschitz constant should not blow up across the q grid
    ratios = []
    for p in (0.3, 0.5, 0.7):
        _, upper = bd.check_quenched_bounds(1, p, p + 0.2, ys=[(2,)],
                                            backend=bd.ExactBackend(1, n=1))
        ratios.append(upper.cells[0].measured)
    spread = (max(ratios) - min(ratios)) / min(ratios)
    assert spread < 2.0  # same order of magnitude across the grid


def test_rate_bound_transfer():
    lower, upper = bd.check_rate_bounds(1, 0.3, 0.6, xs=[(0.5,)], backend=BACKEND)
    assert all(c.margin >= -1e-8 for c in lower.cells)
    assert not lower.failed
    assert all(c.measured > 0 for c in upper.cells)


def test_rate_bound_rejects_boundary_x():
    with pytest.raises(ValidationError):
        bd.check_rate_bounds(1, 0.3, 0.6, xs=[(1.0,)], backend=BACKEND)


def test_rate_difference_inequality_at_supremizer():
    # I_p(x) - (alpha_q(t, x) - t) >= alpha_p(t, x) - alpha_q(t, x) at t = lambda*_q
    p, q, x = 0.3, 0.6, (0.5,)
    rq = bd.rate_function(1, q, x, backend=BACKEND)
    rp = bd.rate_function(1, p, x, backend=BACKEND)
    t = rq.supremizer if rq.supremizer != bd.AT_BRACKET_MAX else 0.0
    scale, v = bd._direction_and_scale(x)
    ap = scale * BACKEND.exponent(bd.QUENCHED, p, t, v)[0]
    aq = scale * BACKEND.exponent(bd.QUENCHED, q, t, v)[0]
    assert rp.value - (aq - t) >= (ap - aq) - 1e-10
    norm = sum(abs(c) for c in x)
    assert (ap - aq) / norm >= (1 - math.exp(-1)) * (q - p) - 1e-10


def test_range_upper_slope_formula():
    got = bd.range_upper_slope(2, 0.3)
    want = (1 + math.log(4)) / -math.log(math.exp(-1) + (1 - math.exp(-1)) * 0.3)
    assert got == want


def test_bad_density_order():
    with pytest.raises(ValidationError):
        bd.check_quenched_bounds(1, 0.7, 0.3)
