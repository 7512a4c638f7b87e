import math

import mpmath as mp
import numpy as np
import pytest

from ccslab.schedule import (
    SeededNoiseSource,
    SigmaPolicy,
    adjustment_coefficient,
    draw_noise,
    make_schedule,
    sigma_at,
    subsample_timesteps,
)


def _mp_alpha(T, b0, b1, dps=50):
    with mp.workdps(dps):
        a = mp.mpf(1)
        out = [a]
        for s in range(1, T + 1):
            beta = mp.mpf(b0) + (mp.mpf(b1) - mp.mpf(b0)) * (s - 1) / max(T - 1, 1)
            a *= 1 - beta
            out.append(a)
        return out


def test_single_step_product():
    assert list(make_schedule(1, 0.5, 0.5).alpha) == [1.0, 0.5]


def test_constant_beta_product():
    np.testing.assert_allclose(make_schedule(2, 0.3, 0.3).alpha, [1.0, 0.7, 0.49], rtol=0, atol=1e-15)


def test_default_schedule_matches_high_precision_product():
    s = make_schedule(1000, 1e-4, 2e-2)
    ref = _mp_alpha(1000, "1e-4", "2e-2")
    assert np.all(np.diff(s.alpha) < 0)
    assert s.alpha[0] == 1.0
    assert s.alpha[1000] < 1e-4
    # frozen from the 50-digit product: 4.0358297653756833e-05
    assert s.alpha[1000] == pytest.approx(4.0358297653756833e-05, rel=1e-12)
    worst = max(abs(float(ref[t]) - s.alpha[t]) / float(ref[t]) for t in range(1001))
    assert worst < 1e-12


def test_alpha_recursion_is_termwise_exact():
    s = make_schedule(1000)
    betas = np.linspace(1e-4, 2e-2, 1000)
    for t in range(1, 1001):
        assert s.alpha[t] == s.alpha[t - 1] * (1.0 - betas[t - 1])


def test_alpha_is_read_only():
    s = make_schedule(10)
    with pytest.raises(ValueError):
        s.alpha[3] = 0.5


@pytest.mark.parametrize("args", [(0, 1e-4, 2e-2), (10, 0.0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0), (10, -0.1, 0.1)])
def test_make_schedule_rejects_bad_ranges(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


def test_schedule_index_out_of_range():
    s = make_schedule(5)
    with pytest.raises(IndexError):
        s.a(6)
    with pytest.raises(IndexError):
        s.a(-1)


def test_sigma_zero_policy(schedule):
    assert all(sigma_at(schedule, SigmaPolicy.zero(), t) == 0.0 for t in (1, 500, 1000))


def test_sigma_consistency_trivial():
    s = make_schedule(2, 0.25, 0.25)  # alpha[1] = 0.75
    assert sigma_at(s, SigmaPolicy.consistency(), 2) == pytest.approx(0.5, abs=1e-15)


def test_sigma_ddim_eta_at_500(schedule):
    # 50-digit evaluation of the eta=1 formula: 0.10015665437011006807
    assert sigma_at(schedule, SigmaPolicy.ddim_eta(1.0), 500) == pytest.approx(0.10015665437011006807, rel=1e-11)
    a, b = schedule.a(499), schedule.a(500)
    expected = 0.3 * math.sqrt((1 - a) / (1 - b)) * math.sqrt(1 - b / a)
    assert sigma_at(schedule, SigmaPolicy.ddim_eta(0.3), 500) == pytest.approx(expected, rel=1e-14)


def test_sigma_out_of_range(schedule):
    with pytest.raises(IndexError):
        sigma_at(schedule, SigmaPolicy.zero(), 0)
    with pytest.raises(IndexError):
        sigma_at(schedule, SigmaPolicy.zero(), 1001)


def test_consistency_sigma_zeroes_adjustment(schedule):
    pol = SigmaPolicy.consistency()
    for t in range(1, schedule.T + 1):
        assert adjustment_coefficient(schedule.a(t - 1), sigma_at(schedule, pol, t)) <= 1e-12


def test_radicand_within_bounds_for_all_policies(schedule):
    for pol in (SigmaPolicy.zero(), SigmaPolicy.ddim_eta(1.0), SigmaPolicy.ddim_eta(0.5), SigmaPolicy.consistency()):
        for t in range(1, schedule.T + 1):
            sig = sigma_at(schedule, pol, t)
            assert 1 - schedule.a(t - 1) - sig * sig >= -1e-12


def test_adjustment_rejects_oversized_sigma():
    with pytest.raises(ValueError):
        adjustment_coefficient(0.5, 0.8)


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_ddim_eta_range(bad):
    with pytest.raises(ValueError):
        SigmaPolicy.ddim_eta(bad)


def test_sigma_policy_parse_roundtrip():
    for p in (SigmaPolicy.zero(), SigmaPolicy.consistency(), SigmaPolicy.ddim_eta(0.25)):
        assert SigmaPolicy.parse(str(p)) == p


def test_subsample_full():
    assert subsample_timesteps(1000, 1000) == list(range(1000, 0, -1))


def test_subsample_30():
    s = subsample_timesteps(1000, 30)
    assert len(s) == 30 and all(a > b for a, b in zip(s, s[1:])) and s[-1] >= 1


@pytest.mark.parametrize("T,n", [(10, 3), (1000, 30), (1000, 50), (7, 7), (1000, 1), (999, 37)])
def test_subsample_against_one_line_oracle(T, n):
    assert subsample_timesteps(T, n) == [T - k * (T // n) for k in range(n)]


def test_subsample_10_3():
    assert subsample_timesteps(10, 3) == [10, 7, 4]


@pytest.mark.parametrize("n", [0, 11])
def test_subsample_range(n):
    with pytest.raises(ValueError):
        subsample_timesteps(10, n)


def test_noise_determinism():
    a = draw_noise(SeededNoiseSource(7, 3), 5)
    b = draw_noise(SeededNoiseSource(7, 3), 5)
    assert a.tobytes() == b.tobytes()


def test_noise_streams_differ():
    a = SeededNoiseSource(7, 3).draw(5)
    b = SeededNoiseSource(7, 4).draw(5)
    assert np.any(a != b)


def test_noise_is_addressable():
    src = SeededNoiseSource(1, 0)
    seq = [src.draw(4) for _ in range(3)]
    assert SeededNoiseSource(1, 0).at(2, 4).tobytes() == seq[2].tobytes()


def test_noise_moments():
    src = SeededNoiseSource(0, 0)
    x = np.concatenate([src.draw(1000) for _ in range(100)])
    assert abs(x.mean()) < 0.02
    assert abs(x.var() - 1) < 0.05
