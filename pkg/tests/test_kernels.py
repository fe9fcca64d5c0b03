import os
import subprocess
import sys

import numpy as np
import pytest

from hojabr import kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _random_matrix(rng, zeros=0.5):
    m = rng.normal(size=(rng.integers(1, 9), rng.integers(1, 9)))
    m[rng.random(m.shape) < zeros] = 0.0
    return m


def _backends(name):
    out = [getattr(K, f"{name}_np")]
    if K.HAVE_NUMBA:
        out.append(getattr(K, f"{name}_nb"))
    return out


@pytest.mark.parametrize("seed", range(20))
def test_dense_to_csr_round_trips(seed):
    m = _random_matrix(np.random.default_rng(seed))
    for fn in _backends("dense_to_csr"):
        P, I, V = fn(np.ascontiguousarray(m))
        back = np.zeros_like(m)
        for i in range(m.shape[0]):
            for p in range(P[i], P[i + 1]):
                back[i, I[p]] = V[p]
        assert np.array_equal(back, m)
        assert P[-1] == np.count_nonzero(m)


@pytest.mark.parametrize("seed", range(20))
def test_csr_to_coo_backends_agree(seed):
    m = _random_matrix(np.random.default_rng(seed))
    P, I, V = K.dense_to_csr_np(np.ascontiguousarray(m))
    results = [fn(P, I, V) for fn in _backends("csr_to_coo")]
    rows, cols, vals = results[0]
    assert np.array_equal(m[rows, cols], vals)
    for other in results[1:]:
        for a, b in zip(results[0], other):
            assert np.array_equal(a, b)


def test_csr_validation():
    with pytest.raises(ValueError):
        K.csr_to_coo(np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 2.0]))


@pytest.mark.parametrize("seed", range(10))
def test_nonzero_backends_agree(seed):
    rng = np.random.default_rng(seed)
    arr = rng.normal(size=(3, 4, 2))
    arr[rng.random(arr.shape) < 0.6] = 0.0
    coords, vals = K.nonzero(arr)
    assert np.array_equal(arr[tuple(coords.T)], vals)
    assert len(vals) == np.count_nonzero(arr)
    results = [fn(arr.reshape(-1)) for fn in _backends("nonzero_flat")]
    for other in results[1:]:
        assert all(np.array_equal(a, b) for a, b in zip(results[0], other))


def _warshall(adj):
    n = len(adj)
    reach = [row[:] for row in adj]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                reach[i][j] = reach[i][j] or (reach[i][k] and reach[k][j])
    return reach


@pytest.mark.parametrize("seed", range(20))
def test_closure_backends_match_warshall(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    adj = rng.random((n, n)) < 0.2
    expected = np.array(_warshall(adj.tolist()))
    for fn in _backends("closure"):
        assert np.array_equal(fn(adj.copy()), expected)
    assert K.transitive_closure(np.zeros((0, 0), bool)).shape == (0, 0)


@pytest.mark.parametrize("seed", range(20))
def test_group_rows_backends_agree(seed):
    rng = np.random.default_rng(seed)
    lhs = rng.integers(0, 4, size=(int(rng.integers(0, 30)), 2))
    rhs = rng.integers(0, 2, size=(len(lhs), 1))
    order = np.lexsort(lhs.T[::-1])
    ls, rs = np.ascontiguousarray(lhs[order]), np.ascontiguousarray(rhs[order])
    ref = K.group_scan_np(ls, rs)
    if K.HAVE_NUMBA and len(ls):
        got = K.group_scan_nb(ls, rs)
        assert all(np.array_equal(a, b) for a, b in zip(ref, got))
    groups = {tuple(r) for r in lhs.tolist()}
    assert len(ref[0]) == len(groups)
    for g, start in enumerate(ref[0]):
        key = tuple(ls[start])
        members = {tuple(r) for r, k in zip(rs.tolist(), ls.tolist()) if tuple(k) == key}
        assert bool(ref[1][g]) == (len(members) > 1)


def test_factorize_keeps_bools_apart():
    codes = K.factorize([1, 1.0, True, "a", 1])
    assert codes.tolist() == [0, 0, 1, 2, 0]


@needs_numba
@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, HOJABR_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from hojabr import kernels; print(kernels.backend())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == expected
