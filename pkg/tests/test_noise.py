import numpy as np
from scipy import stats

from neutral_spde_lab.noise import brownian_increments, standard_normals


def test_same_inputs_same_draws():
    assert np.array_equal(standard_normals(3, 1, 0, 1000), standard_normals(3, 1, 0, 1000))


def test_blocks_are_position_independent():
    full = standard_normals(9, 2, 0, 103)
    for start, count in [(0, 1), (1, 7), (5, 40), (64, 39), (101, 2)]:
        assert np.array_equal(standard_normals(9, 2, start, count), full[start:start + count])


def test_streams_differ_by_seed_and_replica():
    a = standard_normals(1, 0, 0, 5000)
    assert abs(np.corrcoef(a, standard_normals(2, 0, 0, 5000))[0, 1]) < 3 / np.sqrt(5000)
    assert abs(np.corrcoef(a, standard_normals(1, 1, 0, 5000))[0, 1]) < 3 / np.sqrt(5000)


def test_draws_are_standard_normal():
    x = standard_normals(123, 0, 0, 200000)
    assert stats.kstest(x, "norm").pvalue > 1e-3
    assert abs(x.mean()) < 4 / np.sqrt(x.size)


def test_increment_scale():
    h = 1e-3
    dw = brownian_increments(5, 0, 0, 100000, h)
    assert abs(dw.var() / h - 1) < 0.03
    assert brownian_increments(5, 0, 0, 0, h).size == 0


def test_large_seed_accepted():
    assert np.isfinite(standard_normals(2**64 - 1, 7, 10**9, 3)).all()
