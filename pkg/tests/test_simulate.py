import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from neutral_spde_lab import simulate as S
from neutral_spde_lab.charfn import NeutralSystem, example_system, no_delay
from neutral_spde_lab.errors import ConfigError, StepSingularError
from neutral_spde_lab.kernels import Constant, Exponential, Table, Zero, trapezoid_weights

BACKENDS = sorted(S.BACKENDS)


def delayed(K=3, noise=None):
    """Point delays and both distributed kernels switched on."""
    return NeutralSystem(1.0, Exponential(0.2, -0.5, 1.0), Table([0.1, -0.2, 0.3, 0.05], 1.0),
                         alpha1=0.15, alpha2=-0.1, noise=np.ones(K) if noise is None else noise)


def test_zero_history_gives_zero_head(stable_example):
    st = S.zero_history(stable_example, 0.01)
    assert np.all(st.z == 0) and st.history.shape == (1, 8, 101)


def test_constant_history_head():
    s = NeutralSystem(1.0, Constant(0.3, 1.0), Zero(1.0), noise=np.ones(2))
    st = S.constant_history(s, 0.05, [2.0, -1.0])
    assert_allclose(st.z[0], [2.0 * 0.7, -0.7], rtol=1e-14)


def test_random_history_recovery():
    s = delayed()
    rng = np.random.default_rng(0)
    st = S.init_history(s, rng.standard_normal((3, 201)), 0.005)
    assert S.recovery_residual(s, st).max() <= 1e-12


def test_history_from_callable():
    s = example_system(1.0, 0.1, 0.0, 0.2, modes=2)
    st = S.init_history(s, lambda th: np.vstack([np.cos(th), th]), 0.1)
    assert_allclose(st.history[0, 0], np.cos(np.linspace(-1, 0, 11)))


def test_grid_mismatch():
    s = no_delay()
    with pytest.raises(ConfigError):
        S.zero_history(s, 0.3)
    with pytest.raises(ConfigError):
        S.init_history(s, np.zeros((1, 7)), 0.1)


def test_incompatible_head_is_honoured():
    s = delayed()
    rng = np.random.default_rng(1)
    st = S.init_history(s, rng.standard_normal((3, 101)), 0.01, phi0=[5.0, -1.0, 0.0])
    assert_allclose(st.z[0], [5.0, -1.0, 0.0])
    assert S.recovery_residual(s, st).max() <= 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_single_step_closed_forms(backend):
    s = no_delay(3, np.zeros(3))
    st = S.constant_history(s, 0.01, [1.0, 2.0, -1.0])
    k2 = np.array([1.0, 4.0, 9.0])
    ex = S.step(st, s, S.SimConfig(h=0.01, T=0.01, scheme="explicit"), 0.0, backend=backend)
    assert_allclose(ex.y[0], (1 - k2 * 0.01) * [1.0, 2.0, -1.0], rtol=1e-15)
    im = S.step(st, s, S.SimConfig(h=0.01, T=0.01), 0.0, backend=backend)
    assert_allclose(im.y[0], np.array([1.0, 2.0, -1.0]) / (1 + k2 * 0.01), rtol=1e-15)
    assert im.step == 1


def test_step_with_noise_adds_b_dw():
    s = no_delay(2, np.array([2.0, -1.0]))
    st = S.zero_history(s, 0.1)
    out = S.step(st, s, S.SimConfig(h=0.1, T=0.1, scheme="explicit"), 0.3)
    assert_allclose(out.y[0], [0.6, -0.3])


def test_step_singular():
    s = NeutralSystem(1.0, Constant(200.0, 1.0), Zero(1.0))
    with pytest.raises(StepSingularError):
        S.run(s, S.SimConfig(h=0.01, T=0.1, scheme="explicit"), S.zero_history(s, 0.01))


def test_empty_run_returns_initial_state(stable_example):
    st = S.constant_history(stable_example, 0.01, np.arange(8.0))
    tr = S.run(stable_example, S.SimConfig(h=0.01, T=0.0), st)
    assert tr.t.tolist() == [0.0]
    assert_allclose(tr.y[0, 0], np.arange(8.0))


def test_no_noise_zero_start_stays_zero():
    s = delayed(noise=np.zeros(3))
    tr = S.run(s, S.SimConfig(h=0.01, T=3.0), S.zero_history(s, 0.01))
    assert not np.any(tr.y) and not np.any(tr.z)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("scheme", S.SCHEMES)
def test_recovery_holds_every_step(backend, scheme):
    s = delayed()
    h, N = 0.01, 100
    cfg = S.SimConfig(h=h, T=4.0, scheme=scheme, seed=4)
    rng = np.random.default_rng(2)
    st = S.init_history(s, rng.standard_normal((3, N + 1)), h)
    tr = S.run(s, cfg, st, backend=backend)
    y = np.concatenate([st.history[0, :, :-1].T, tr.y[0]])  # (N + steps + 1, K)
    wg = trapezoid_weights(s.gamma, N)
    for i in range(N, y.shape[0]):
        win = y[i - N:i + 1]
        z = win[-1] - s.alpha1 * win[0] - wg @ win
        assert np.all(np.abs(tr.z[0, i - N] - z) <= 1e-12 * (1 + np.abs(win[-1])))


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled core not built")
    s = delayed()
    rng = np.random.default_rng(3)
    for scheme in S.SCHEMES:
        cfg = S.SimConfig(h=0.02, T=6.0, scheme=scheme, seed=9, replicas=3, stride=3)
        st = S.init_history(s, rng.standard_normal((3, 3, 51)), 0.02)
        a = S.run(s, cfg, st, backend="cython")
        b = S.run(s, cfg, st, backend="python")
        assert_allclose(a.y, b.y, rtol=0, atol=1e-12)
        assert_allclose(a.final.history, b.final.history, rtol=0, atol=1e-12)


def test_linearity():
    s = delayed(noise=np.zeros(3))
    rng = np.random.default_rng(4)
    p1, p2 = rng.standard_normal((2, 3, 101))
    cfg = S.SimConfig(h=0.01, T=5.0)
    run = lambda p: S.run(s, cfg, S.init_history(s, p, 0.01)).y
    both, a, b = run(p1 + p2), run(p1), run(p2)
    assert np.max(np.abs(both - a - b)) <= 1e-10 * np.max(np.abs(both))


def test_seed_determinism_and_thread_independence(stable_example):
    cfg = S.SimConfig(h=0.01, T=5.0, seed=77, replicas=4, stride=2)
    st = S.zero_history(stable_example, 0.01, replicas=4)
    a = S.run(stable_example, cfg, st)
    b = S.run(stable_example, cfg, st)
    c = S.run(stable_example, cfg, st, threads=3)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.y, c.y) and np.array_equal(a.z, c.z)


def test_chunking_does_not_change_output(monkeypatch, stable_example):
    cfg = S.SimConfig(h=0.01, T=3.0, seed=5, stride=3)
    st = S.zero_history(stable_example, 0.01)
    ref = S.run(stable_example, cfg, st)
    monkeypatch.setattr(S, "_CHUNK", 7)
    assert np.array_equal(S.run(stable_example, cfg, st).y, ref.y)


def test_stride_subsamples(stable_example):
    st = S.zero_history(stable_example, 0.01)
    full = S.run(stable_example, S.SimConfig(h=0.01, T=2.0, seed=3), st)
    sub = S.run(stable_example, S.SimConfig(h=0.01, T=2.0, seed=3, stride=5), st)
    assert np.array_equal(sub.y, full.y[:, ::5]) and np.array_equal(sub.t, full.t[::5])


def test_independent_seeds_decorrelate():
    s = example_system(1.0, 0.1, 0.0, 0.2)
    st = S.zero_history(s, 0.01, replicas=100)
    a = S.run(s, S.SimConfig(h=0.01, T=2.0, seed=1, replicas=100, stride=200), st).y[:, -1, 0]
    b = S.run(s, S.SimConfig(h=0.01, T=2.0, seed=2, replicas=100, stride=200), st).y[:, -1, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) <= 3 / math.sqrt(100)


def test_zero_start_mean_vanishes(stable_example):
    R = 200
    st = S.zero_history(stable_example, 0.01, replicas=R)
    y = S.run(stable_example, S.SimConfig(h=0.01, T=3.0, seed=8, replicas=R, stride=300), st).y[:, -1]
    assert np.all(np.abs(y.mean(0)) <= 3 * y.std(0, ddof=1) / math.sqrt(R))


def test_reconstruct_field():
    assert_allclose(S.reconstruct_field([1.0, 0.0, 0.0], [math.pi / 2]), [math.sqrt(2 / math.pi)])
    assert_allclose(S.reconstruct_field([1.0, 0.0], [math.pi / 2]), [0.797884561], atol=1e-9)
    assert not np.any(S.reconstruct_field(np.zeros(4), np.linspace(0, math.pi, 9)))
    edge = S.reconstruct_field(np.arange(1.0, 6.0), [0.0, math.pi])
    assert edge.tolist() == [0.0, 0.0]
    traj = np.random.default_rng(0).standard_normal((7, 3))
    assert S.reconstruct_field(traj, np.linspace(0.1, 3.0, 5)).shape == (7, 5)


def test_restart_examples(stable_example):
    cfg = S.SimConfig(h=0.01, T=0.0)
    rng = np.random.default_rng(6)
    st = S.init_history(stable_example, rng.standard_normal((8, 101)), 0.01)
    assert S.restart_check(stable_example, cfg, st, 0.0, 1.3) == 0.0
    assert S.restart_check(stable_example, cfg, st, 1.0, 1.0) <= 1e-12
    for s_, t_ in rng.integers(0, 300, size=(3, 2)):
        assert S.restart_check(stable_example, cfg, st, s_ * 0.01, t_ * 0.01) <= 1e-12


def test_csv_output(tmp_path, stable_example):
    tr = S.run(stable_example, S.SimConfig(h=0.01, T=0.05, seed=1), S.zero_history(stable_example, 0.01))
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t," + ",".join(f"y_{k}" for k in range(1, 9)) + "," + ",".join(f"z_{k}" for k in range(1, 9))
    assert len(lines) == 7
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1:9], tr.y[0])


def test_config_validation():
    with pytest.raises(ConfigError):
        S.SimConfig(h=0.0, T=1.0)
    with pytest.raises(ConfigError):
        S.SimConfig(h=0.1, T=1.0, burn_in=1.0)
    with pytest.raises(ConfigError):
        S.SimConfig(h=0.1, T=1.0, scheme="rk4")
    with pytest.raises(ConfigError):
        S.SimConfig(h=0.1, T=1.0).steps(0.55)


def test_backend_selection_env(monkeypatch):
    import importlib
    monkeypatch.setenv("NEUTRAL_SPDE_LAB_PURE", "1")
    mod = importlib.reload(S)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("NEUTRAL_SPDE_LAB_PURE")
        importlib.reload(S)
