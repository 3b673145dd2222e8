import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwrp.environment import (
    ENUMERATION_GUARD,
    constant_environment,
    couple,
    enumerate_environments,
    flip_site,
    from_values,
    load_environment,
    mask_weight_derivatives,
    mask_weights,
    sample_environment,
    save_environment,
)
from rwrp.errors import GuardError, ValidationError
from rwrp.lattice import build_box


def test_sampling_frequency_matches_r():
    box = build_box(2, 20)
    env = sample_environment(box, 0.7, 42)
    # P(omega = 0) = r; 1681 sites, binomial 5-sigma band
    zeros = int((env.values == 0).sum())
    n = box.site_count
    assert abs(zeros / n - 0.7) < 5 * np.sqrt(0.7 * 0.3 / n)


def test_sampling_is_deterministic():
    box = build_box(1, 5)
    a = sample_environment(box, 0.4, 9)
    b = sample_environment(box, 0.4, 9)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_environment(box, 0.4, 10).values)


@given(r1=st.floats(0.01, 0.99), r2=st.floats(0.01, 0.99), seed=st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_coupling_is_monotone(r1, r2, seed):
    # larger r means more zeros: omega_{r small} >= omega_{r large} pointwise
    lo, hi = sorted((r1, r2))
    box = build_box(1, 4)
    env_lo = sample_environment(box, lo, seed)
    env_hi = couple(env_lo, hi)
    assert (env_lo.values >= env_hi.values).all()


def test_coupling_same_as_resampling():
    box = build_box(2, 3)
    direct = sample_environment(box, 0.25, 77)
    via_couple = couple(sample_environment(box, 0.8, 77), 0.25)
    assert np.array_equal(direct.values, via_couple.values)


def test_environment_extends_across_boxes():
    # same seed, bigger box: values agree on the common sites
    small = build_box(2, 3)
    large = build_box(2, 9)
    env_s = sample_environment(small, 0.5, 5)
    env_l = sample_environment(large, 0.5, 5)
    for idx in range(small.site_count):
        site = small.site_of(idx)
        assert env_s.values[idx] == env_l.values[large.index_of(site)]


def test_flip_site():
    box = build_box(1, 2)
    env = constant_environment(box, 0)
    flipped = flip_site(env, (1,), 1)
    assert flipped.value_at((1,)) == 1
    assert env.value_at((1,)) == 0
    assert flipped.value_at((0,)) == 0


def test_enumeration_weights_sum_to_one():
    box = build_box(1, 1)
    sites = [(-1,), (0,)]
    total = sum(we.weight for we in enumerate_environments(box, sites, 0.3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_enumeration_guard():
    box = build_box(2, 3)
    sites = [box.site_of(i) for i in range(ENUMERATION_GUARD + 1)]
    with pytest.raises(GuardError):
        list(enumerate_environments(box, sites, 0.5))


def test_mask_weight_derivative_is_ddr():
    k = 5
    masks = np.arange(1 << k, dtype=np.uint64)
    r, h = 0.37, 1e-7
    num = (mask_weights(k, masks, r + h) - mask_weights(k, masks, r - h)) / (2 * h)
    assert np.allclose(mask_weight_derivatives(k, masks, r), num, atol=1e-6)


def test_save_load_round_trip(tmp_path):
    box = build_box(2, 2)
    env = sample_environment(box, 0.6, 31)
    path = tmp_path / "env.txt"
    save_environment(env, path)
    back = load_environment(path)
    assert np.array_equal(back.values, env.values)
    assert back.parameter_r == env.parameter_r
    assert back.seed == env.seed
    # reloaded environments keep their uniforms, so coupling still works
    assert np.array_equal(couple(back, 0.2).values, couple(env, 0.2).values)


def test_save_load_without_seed(tmp_path):
    box = build_box(1, 1)
    env = from_values(box, [1, 0, 1])
    path = tmp_path / "env.txt"
    save_environment(env, path)
    back = load_environment(path)
    assert np.array_equal(back.values, env.values)
    assert back.seed is None


def test_invalid_r():
    box = build_box(1, 1)
    with pytest.raises(ValidationError):
        sample_environment(box, 1.5, 0)
