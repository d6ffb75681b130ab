import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from neutral_spde_lab import simulate as S
from neutral_spde_lab import stationary as V
from neutral_spde_lab.charfn import NeutralSystem, example_system, no_delay
from neutral_spde_lab.errors import (InsufficientLengthError, NonConvergenceError,
                                     PreconditionError, TailBoundUnavailableError)
from neutral_spde_lab.kernels import Constant, Zero


def test_no_delay_closed_form():
    s = no_delay(3, np.array([1.0, 3.0, 0.5]))
    assert abs(V.oracle_variance(s, 1) - 0.5) <= 1e-8
    assert abs(V.oracle_variance(s, 2) - 9.0 / 8.0) <= 1e-8
    assert abs(V.oracle_variance(s, 3) - 0.25 / 18.0) <= 1e-8


def test_cross_covariance_closed_form():
    s = no_delay(3, np.array([1.0, 1.0, 0.0]))
    assert abs(V.oracle_cross_cov(s, 1, 3)) == 0.0
    assert abs(V.oracle_cross_cov(s, 1, 2) - 1.0 / 5.0) <= 1e-8
    assert V.oracle_cross_cov(s, 2, 2) == V.oracle_variance(s, 2)


def test_cross_symmetry(stable_example):
    assert V.oracle_cross_cov(stable_example, 1, 3) == V.oracle_cross_cov(stable_example, 3, 1)


def test_matrix_rank_one_no_delay():
    b = np.array([1.0, -0.5, 2.0, 0.3])
    C, err = V.oracle_matrix(no_delay(4, b), tol=1e-9)
    j = np.arange(1, 5)
    exact = np.outer(b, b) / (j[:, None] ** 2 + j[None, :] ** 2)
    assert np.max(np.abs(C - exact)) <= 1e-8
    assert err <= 1e-8
    assert_allclose(C, C.T, rtol=0, atol=0)


def test_example_value_and_error_budget():
    s = example_system(1.0, 0.1, 0.0, 0.2)
    res = V.oracle_variance(s, 1, full=True)
    assert res.quadrature_error + res.tail_bound <= 1e-8
    assert abs(res.value - 0.50365335) <= 1e-7


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 5.0))
def test_noise_scaling(c):
    s = example_system(1.0, 0.1, 0.0, 0.2, modes=2, noise=np.array([1.0, 1.0]))
    sc = example_system(1.0, 0.1, 0.0, 0.2, modes=2, noise=np.array([c, 1.0]))
    v1, vc = V.oracle_variance(s, 1), V.oracle_variance(sc, 1)
    assert abs(vc - c * c * v1) <= 2e-8 * max(1.0, c * c)


def test_tighter_tolerance_is_consistent(stable_example):
    loose = V.oracle_variance(stable_example, 2, tol=1e-5, full=True)
    tight = V.oracle_variance(stable_example, 2, tol=1e-10, full=True)
    assert abs(loose.value - tight.value) <= 1e-5
    assert tight.quadrature_error + tight.tail_bound <= loose.quadrature_error + loose.tail_bound


def test_zero_noise_mode_is_zero():
    s = no_delay(2, np.array([0.0, 1.0]))
    assert V.oracle_variance(s, 1) == 0.0


def test_unstable_system_rejected():
    s = NeutralSystem(1.0, Zero(1.0), Constant(-3.0, 1.0), noise=np.ones(1))
    with pytest.raises(PreconditionError):
        V.oracle_variance(s, 1)


def test_tail_bound_unavailable_and_fallback():
    s = NeutralSystem(1.0, Constant(0.6, 1.0), Zero(1.0), alpha1=0.5, noise=np.ones(1))
    with pytest.raises(TailBoundUnavailableError):
        V.oracle_variance(s, 1, check_stability=False)
    res = V.oracle_variance(s, 1, omega_max=50.0, check_stability=False, full=True)
    assert res.tail_bound is None and res.omega_max == 50.0


def test_user_window_gets_tail_bound_when_valid():
    res = V.oracle_variance(no_delay(1), 1, omega_max=1e6, full=True)
    assert res.tail_bound is not None and res.tail_bound < 1e-6
    assert abs(res.value - 0.5) <= 2e-6


def test_adaptive_simpson_budget():
    with pytest.raises(NonConvergenceError):
        V.adaptive_simpson(lambda x: np.sin(1.0 / (x + 1e-4)), np.array([0.0, 1.0]), 1e-14, max_evals=1000)
    val, err, _ = V.adaptive_simpson(np.exp, np.array([0.0, 0.5, 1.0]), 1e-12)
    assert abs(val - (math.e - 1)) <= 1e-11


def test_default_burn_in():
    assert V.default_burn_in(-0.5) == pytest.approx(100.0)


def white(n, K=2, seed=0):
    return np.random.default_rng(seed).standard_normal((n, K))


def test_white_noise_passes():
    y = white(8000)
    t = 0.01 * np.arange(8000)
    est = V.empirical_report((t, y), 0.0, 1.0, oracle=[1.0, 1.0])
    assert est.verdict == "PASS" and est.oracle_verdict == "PASS"
    assert est.lag_samples == 100
    assert set(est.to_dict()) >= {"windows", "pooled_variance", "verdict"}


def test_drift_fails_on_mean():
    t = 0.01 * np.arange(8000)
    y = white(8000) + 0.5 * (t / t[-1])[:, None]
    est = V.empirical_report((t, y), 0.0, 1.0)
    assert est.verdict == "FAIL"
    assert not np.all(est.window_verdicts["mean"]["pass"])


def test_wrong_oracle_fails():
    t = 0.01 * np.arange(8000)
    est = V.empirical_report((t, white(8000)), 0.0, 1.0, oracle=[2.0, 1.0])
    assert est.oracle_verdict == "FAIL" and est.oracle_z[0] > 3


def test_insufficient_length():
    t = 0.01 * np.arange(1500)
    with pytest.raises(InsufficientLengthError):
        V.empirical_report((t, white(1500)), 0.0, 1.0)
    t = 0.01 * np.arange(3000)
    with pytest.raises(InsufficientLengthError):
        V.empirical_report((t, white(3000)), 15.0, 1.0)


def test_accepts_trajectory_and_1d():
    t = 0.01 * np.arange(4000)
    est = V.empirical_report((t, white(4000, K=1)[:, 0]), 0.0, 1.0)
    assert est.pooled_variance.shape == (1,)


@pytest.mark.slow
def test_example_monte_carlo_ensemble():
    s = example_system(1.0, 0.1, 0.0, 0.2)
    v = V.oracle_variance(s, 1)
    R, h = 200, 1e-3
    cfg = S.SimConfig(h=h, T=25.0, seed=11, replicas=R, stride=25000)
    y = S.run(s, cfg, S.zero_history(s, h, replicas=R)).y[:, -1, 0]
    m2 = y ** 2
    assert abs(m2.mean() - v) <= 3 * m2.std(ddof=1) / math.sqrt(R)
