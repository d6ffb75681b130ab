import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from neutral_spde_lab import charfn
from neutral_spde_lab.charfn import (NeutralSystem, classify, delta_mode, delta_mode_derivative, example_system,
                                     from_concrete, m_of, n_derivative, n_of, no_delay, transfer)
from neutral_spde_lab.errors import ConfigError, DomainError, SingularTransferError
from neutral_spde_lab.kernels import Constant, Exponential, Sum, Zero, l1_norm, laplace


def quad(f, r, n=200001):
    theta = np.linspace(-r, 0.0, n)
    y = f(theta)
    return (theta[1] - theta[0]) * (y.sum() - 0.5 * (y[0] + y[-1]))


def test_from_concrete_no_delay():
    s = from_concrete(1.0, Zero(1.0), Zero(1.0))
    assert s.gamma == Zero(1.0) and s.beta == Zero(1.0)
    assert s.alpha1 == s.alpha2 == 0.0


def test_from_concrete_shifts_gamma_into_beta():
    s = from_concrete(1.0, Constant(0.2, 1.0), Constant(0.1, 1.0))
    assert_allclose(l1_norm(s.beta), 0.3, rtol=1e-12)
    for g, b in [(0.2, 0.1), (0.05, 0.4), (0.3, 0.3)]:
        s = from_concrete(1.0, Constant(g, 1.0), Constant(b, 1.0))
        assert_allclose(l1_norm(s.gamma) + l1_norm(s.beta), 2 * g + b, rtol=1e-12)


def test_from_concrete_horizon_mismatch():
    with pytest.raises(ConfigError):
        from_concrete(1.0, Constant(0.2, 2.0), Zero(1.0))


def test_system_rejects_mismatched_kernel():
    with pytest.raises(ConfigError):
        NeutralSystem(1.0, Constant(0.1, 1.0), Constant(0.1, 1.5))


def test_m_examples():
    s = example_system(1.0, 0.3, 0.5, 0.2)
    assert m_of(s, 0.0) == 0
    assert m_of(no_delay(), -1.0) == -1.0
    g = NeutralSystem(1.0, Constant(0.2, 1.0), Zero(1.0))
    ref = 1.0 * (1.0 - quad(lambda th: 0.2 * np.exp(th), 1.0))
    assert_allclose(m_of(g, 1.0), ref, rtol=1e-10)
    assert_allclose(m_of(g, 1.0), 0.873575888, atol=1e-9)


def test_n_examples():
    assert n_of(no_delay(), 2.5 - 1j) == 1.0
    s = NeutralSystem(1.0, Exponential(0.3, 1.0, 1.0), Constant(0.25, 1.0), alpha1=0.2, alpha2=-0.1)
    expected = 1 - 0.2 - 0.1 + quad(lambda th: 0.25 - 0.3 * np.exp(th), 1.0)
    assert_allclose(n_of(s, 0.0), expected, rtol=1e-10)


def test_n_concrete_at_origin():
    # 1 - L_gamma(0) + L_{beta+gamma}(0) = 1 + L_beta(0), independent of gamma
    s = from_concrete(1.0, Constant(0.2, 1.0), Constant(0.1, 1.0))
    ref = 1 - quad(lambda th: 0.2 + 0 * th, 1.0) + quad(lambda th: 0.3 + 0 * th, 1.0)
    assert_allclose(n_of(s, 0.0), ref, rtol=1e-12)
    assert_allclose(n_of(s, 0.0), 1.1, rtol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.7 + 2j, 3j, 1e-8])
def test_n_concrete_identity(lam):
    gamma, beta = Exponential(0.4, -0.5, 1.0), Constant(0.15, 1.0)
    s = from_concrete(1.0, gamma, beta)
    assert abs(n_of(s, lam) - (1 + laplace(beta, lam))) <= 1e-12


def test_delta_examples():
    assert delta_mode(no_delay(), 1, -1.0) == 0
    assert delta_mode(no_delay(3), 3, 0.0) == 9
    s = NeutralSystem(1.0, Zero(1.0), Constant(0.5, 1.0))
    assert_allclose(delta_mode(s, 1, 1.0), 2 + 0.5 * (1 - math.exp(-1)), rtol=1e-15)
    assert_allclose(delta_mode(s, 1, 1.0), 2.316060279, atol=1e-9)


def test_delta_mode_range():
    with pytest.raises(DomainError):
        delta_mode(no_delay(2), 3, 0.0)
    with pytest.raises(DomainError):
        delta_mode(no_delay(2), 0, 0.0)


def test_transfer_examples():
    assert transfer(no_delay(), 1, 0.0) == 1.0
    assert_allclose(transfer(no_delay(), 1, 1.0), 1 / (1 + 1j))
    assert_allclose(abs(transfer(no_delay(), 1, 1.0)), 1 / math.sqrt(2))


def test_transfer_finite_on_stable_config(stable_example):
    w = np.linspace(-100, 100, 20001)
    for k in (1, 4, 8):
        assert np.all(np.isfinite(transfer(stable_example, k, w)))


def test_transfer_singular():
    # Delta_1(0) = 1 + L_beta(0) = 0 when beta = -1 on [-1, 0]
    s = NeutralSystem(1.0, Zero(1.0), Constant(-1.0, 1.0))
    with pytest.raises(SingularTransferError):
        transfer(s, 1, 0.0)


def test_classify_gamma1():
    s = no_delay(5)
    for k in range(1, 6):
        c = classify(s, -k * k)
        assert c.tag == "Gamma1" and c.k == k


def test_classify_gamma0_point_delay():
    # n = 1 - 0.5 e^{-lam}: zeros at -ln 2 + 2 pi i j
    s = NeutralSystem(1.0, Zero(1.0), Zero(1.0), alpha1=0.5)
    for j in (0, 1, -2):
        lam = -math.log(2) + 2j * math.pi * j
        assert abs(n_of(s, lam)) < 1e-14
        assert classify(s, lam).tag == "Gamma0"


def test_classify_not_spectral(stable_example):
    c = classify(stable_example, 5.0)
    assert c.tag == "NotSpectral"
    assert c.n_residual > 1e-8 and c.delta_residual > 1e-8


def test_classify_doubling_tol_keeps_exact_roots():
    s = no_delay(3)
    for tol in (1e-12, 2e-12, 1e-8, 2e-8):
        assert classify(s, -4.0, tol).tag == "Gamma1"


def test_classify_requires_positive_tol():
    with pytest.raises(DomainError):
        classify(no_delay(), -1.0, 0.0)


def test_derivatives_by_finite_difference():
    s = NeutralSystem(1.0, Exponential(0.3, -0.4, 1.0), Constant(0.2, 1.0), alpha1=0.1, alpha2=0.05, noise=np.ones(2))
    for lam in (0.3 + 0.2j, -1.0 + 4j):
        h = 1e-6
        fd = (delta_mode(s, 2, lam + h) - delta_mode(s, 2, lam - h)) / (2 * h)
        assert_allclose(delta_mode_derivative(s, 2, lam), fd, rtol=1e-7)
        fd = (n_of(s, lam + h) - n_of(s, lam - h)) / (2 * h)
        assert_allclose(n_derivative(s, lam), fd, rtol=1e-7)


coef = st.floats(-0.9, 0.9)


@settings(max_examples=100, deadline=None)
@given(coef, coef, st.floats(-2, 2), coef, coef, st.floats(-5, 5), st.floats(-20, 20), st.integers(1, 4))
def test_conjugate_symmetry_and_definition(kappa, alpha, mu, a1, a2, x, y, k):
    s = NeutralSystem(1.0, Exponential(kappa, mu, 1.0), Constant(alpha, 1.0), a1, a2, np.ones(4))
    lam = complex(x, y)
    assert abs(m_of(s, lam.conjugate()) - np.conj(m_of(s, lam))) <= 1e-12 * (1 + abs(m_of(s, lam)))
    assert abs(n_of(s, lam.conjugate()) - np.conj(n_of(s, lam))) <= 1e-12 * (1 + abs(n_of(s, lam)))
    assert delta_mode(s, k, lam) == m_of(s, lam) + k * k * n_of(s, lam)
    assert m_of(s, 0.0) == 0


def test_vectorised_evaluation(stable_example):
    lams = np.array([0.1, -1 + 2j, 3j])
    vals = delta_mode(stable_example, 2, lams)
    assert vals.shape == (3,)
    for lam, v in zip(lams, vals):
        assert v == delta_mode(stable_example, 2, complex(lam))


def test_system_is_immutable(stable_example):
    with pytest.raises(ValueError):
        stable_example.noise[0] = 3.0
    assert charfn.NeutralSystem.__dataclass_params__.frozen
