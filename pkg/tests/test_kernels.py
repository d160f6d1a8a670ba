import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lowrank import kernels
from lowrank.kernels import (
    ContractError,
    cond2,
    first_argmax,
    lu_solve,
    pivot_scan,
    rank1_update,
    solve_unit_lower_triangular,
    solve_unit_upper_triangular,
    svd,
    sym_eig,
)

from oracles import SVD_4222

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_backend_name_is_reported():
    assert kernels.BACKEND in ("python", "cython")


# --- sym_eig ---------------------------------------------------------------

def test_sym_eig_identity(backend):
    res = sym_eig(np.eye(2), backend=backend)
    np.testing.assert_allclose(res.eigenvalues, [1.0, 1.0])
    np.testing.assert_allclose(res.eigenvectors.T @ res.eigenvectors, np.eye(2), atol=1e-15)


def test_sym_eig_diagonal_gives_axis_vectors(backend):
    res = sym_eig(np.diag([2.0, 1.0]), backend=backend)
    np.testing.assert_array_equal(res.eigenvalues, [2.0, 1.0])
    np.testing.assert_allclose(np.abs(res.eigenvectors), np.eye(2))


def test_sym_eig_two_by_two_by_hand(backend):
    # characteristic polynomial l^2 - 4 l + 3
    res = sym_eig([[2.0, 1.0], [1.0, 2.0]], backend=backend)
    np.testing.assert_allclose(res.eigenvalues, [3.0, 1.0], rtol=1e-14)


def test_sym_eig_rejects_bad_input():
    with pytest.raises(ContractError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(ContractError):
        sym_eig([[1.0, 2.0], [0.0, 1.0]])


def test_sym_eig_ties_keep_original_order(backend):
    res = sym_eig(np.diag([1.0, 3.0, 1.0]), backend=backend)
    np.testing.assert_array_equal(np.abs(res.eigenvectors[:, 1]), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(np.abs(res.eigenvectors[:, 2]), [0.0, 0.0, 1.0])


def test_sym_eig_reconstructs_random_symmetric(backend):
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 31))
        a = rng.standard_normal((n, n))
        c = a + a.T
        res = sym_eig(c, backend=backend)
        v = res.eigenvectors
        rebuilt = (v * res.eigenvalues) @ v.T
        assert np.abs(rebuilt - c).max() <= 1e-9 * np.abs(c).max()
        np.testing.assert_allclose(res.eigenvalues, np.linalg.eigvalsh(c)[::-1],
                                   atol=1e-11 * np.abs(c).max())


# --- svd -------------------------------------------------------------------

def test_svd_identity(backend):
    s, u, v = svd(np.eye(4), backend=backend)
    np.testing.assert_allclose(s, 1.0)


def test_svd_rank_one(backend):
    a = np.outer([1.0, 2.0, 2.0], [3.0, 4.0])
    s = svd(a, backend=backend)[0]
    assert s[0] == pytest.approx(15.0, rel=1e-14)
    assert s[1] == 0.0


def test_svd_four_two_two_two(backend):
    # 3 +- sqrt(5); the matrix is symmetric positive definite
    s = svd([[4.0, 2.0], [2.0, 2.0]], backend=backend)[0]
    np.testing.assert_allclose(s, SVD_4222, rtol=1e-14)
    np.testing.assert_allclose(s, [3 + math.sqrt(5), 3 - math.sqrt(5)], rtol=1e-14)


@pytest.mark.parametrize("shape", [(7, 4), (4, 7), (5, 5), (1, 3), (3, 1)])
def test_svd_factorization(backend, shape):
    a = np.random.default_rng(3).standard_normal(shape)
    s, u, v = svd(a, backend=backend)
    k = min(shape)
    assert u.shape == (shape[0], k) and v.shape == (shape[1], k)
    np.testing.assert_allclose((u * s) @ v.T, a, atol=1e-13)
    np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-13)
    np.testing.assert_allclose(v.T @ v, np.eye(k), atol=1e-13)


def test_svd_matches_eigenvalues_of_gram(backend):
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.standard_normal((int(rng.integers(2, 12)), int(rng.integers(2, 12))))
        s = svd(a, backend=backend)[0]
        lam = sym_eig(a.T @ a, backend=backend).eigenvalues[:s.size]
        np.testing.assert_allclose(s, np.sqrt(np.maximum(lam, 0.0)), rtol=1e-8)


def test_svd_rank_deficient_completes_orthonormal_columns():
    a = np.zeros((4, 3))
    a[0, 0] = 2.0
    s, u, v = svd(a)
    np.testing.assert_array_equal(s, [2.0, 0.0, 0.0])
    np.testing.assert_allclose(u.T @ u, np.eye(3), atol=1e-15)


# --- triangular solves -----------------------------------------------------

def test_forward_substitution_examples(backend):
    np.testing.assert_array_equal(
        solve_unit_lower_triangular(np.eye(2), [3.0, 4.0], backend=backend), [3.0, 4.0])
    np.testing.assert_array_equal(
        solve_unit_lower_triangular([[1.0, 0.0], [0.5, 1.0]], [2.0, 2.0], backend=backend),
        [2.0, 1.0])
    np.testing.assert_array_equal(
        solve_unit_lower_triangular([[1.0]], [7.0], backend=backend), [7.0])


def test_triangular_shape_mismatch():
    with pytest.raises(ContractError):
        solve_unit_lower_triangular(np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        solve_unit_upper_triangular(np.eye(3), [1.0])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12).flatmap(
    lambda n: st.tuples(arrays(np.float64, (n, n), elements=st.floats(-1, 1)),
                        arrays(np.float64, (n, 2), elements=finite))))
def test_triangular_solves_invert_multiplication(data):
    low, x = data
    b = np.tril(low, -1) + np.eye(low.shape[0])
    got = solve_unit_lower_triangular(b, b @ x)
    assert np.abs(got - x).max() <= 1e-11 * max(1.0, np.abs(x).max()) * 4 ** low.shape[0]
    up = b.T
    got = solve_unit_upper_triangular(up, up @ x)
    assert np.abs(got - x).max() <= 1e-11 * max(1.0, np.abs(x).max()) * 4 ** low.shape[0]


def test_triangular_solves_random_well_conditioned(backend):
    rng = np.random.default_rng(8)
    for n in (1, 5, 20):
        b = np.tril(rng.uniform(-1, 1, (n, n)) / n, -1) + np.eye(n)
        x = rng.standard_normal((n, 3))
        np.testing.assert_allclose(solve_unit_lower_triangular(b, b @ x, backend=backend),
                                   x, atol=1e-11)
        np.testing.assert_allclose(solve_unit_upper_triangular(b.T, b.T @ x, backend=backend),
                                   x, atol=1e-11)


# --- lu_solve and cond2 ----------------------------------------------------

def test_lu_solve_against_numpy():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((6, 6))
    rhs = rng.standard_normal((6, 2))
    np.testing.assert_allclose(lu_solve(a, rhs), np.linalg.solve(a, rhs), rtol=1e-10)


def test_lu_solve_one_by_one_is_exact():
    assert lu_solve([[3.0]], [3.0])[0] == 1.0


def test_lu_solve_singular():
    with pytest.raises(np.linalg.LinAlgError):
        lu_solve(np.zeros((2, 2)), [1.0, 1.0])


def test_cond2_examples(backend):
    assert cond2(np.eye(3), backend=backend) == 1.0
    assert cond2(np.diag([4.0, 2.0]), backend=backend) == pytest.approx(2.0, rel=1e-15)
    assert cond2([[1.0, 1.0], [1.0, 1.0]], backend=backend) == math.inf
    with pytest.raises(ContractError):
        cond2(np.zeros((2, 2)))


# --- greedy scans ----------------------------------------------------------

def test_first_argmax_lowest_index_on_ties(backend):
    assert backend.first_argmax(np.array([1.0, 3.0, 3.0]), 1e-12) == 1
    assert backend.first_argmax(np.array([1.0, 3.0 - 1e-15, 3.0]), 1e-12) == 1
    assert backend.first_argmax(np.array([1.0, 2.9, 3.0]), 1e-12) == 2
    assert first_argmax([0.0, 0.0]) == 0


def test_first_argmax_absolute_tie_band(backend):
    # values carrying rounding of size 1e-16 on data of size 1 are ties
    vals = np.array([1.0, 4.0763485e-09, 4.0763489e-09])
    assert backend.first_argmax(vals[1:], 1e-12) == 1
    assert backend.first_argmax(vals[1:], 1e-12, 1e-14) == 0
    r = np.array([[0.0, 4.0763489e-09], [4.0763485e-09, 0.0]])
    assert backend.pivot_scan(r, 1e-12)[:2] == (0, 1)
    assert backend.pivot_scan(r, 1e-12, 1e-14)[:2] == (1, 0)


def test_first_argmax_empty():
    with pytest.raises(ContractError):
        first_argmax([])


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.sampled_from([-2.0, -1.0, 0.0, 0.5, 1.0, 2.0])))
def test_pivot_scan_is_column_first(r):
    i, j, val = pivot_scan(r)
    colmax = np.abs(r).max(axis=0)
    assert j == int(np.flatnonzero(colmax == colmax.max())[0])
    assert i == int(np.flatnonzero(np.abs(r[:, j]) == colmax[j])[0])
    assert val == r[i, j]


def test_backends_agree_on_scans():
    from conftest import _ckernels, _pykernels
    if _ckernels is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(2)
    for _ in range(50):
        r = rng.integers(-3, 4, size=(5, 4)).astype(float)
        assert _ckernels.pivot_scan(r, 1e-12) == _pykernels.pivot_scan(r, 1e-12)
        v = np.abs(r).ravel()
        assert _ckernels.first_argmax(v, 1e-12) == _pykernels.first_argmax(v, 1e-12)


def test_rank1_update_in_place(backend):
    r = np.array([[4.0, 2.0], [2.0, 2.0]])
    backend.rank1_update(r, r[:, 0].copy(), r[0, :].copy(), 4.0)
    np.testing.assert_array_equal(r, [[0.0, 0.0], [0.0, 1.0]])
    r = np.ones((2, 3))
    rank1_update(r, np.ones(2), np.ones(3), 1.0)
    np.testing.assert_array_equal(r, 0.0)


def test_backends_agree_on_jacobi():
    from conftest import _ckernels, _pykernels
    if _ckernels is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(4)
    a = rng.standard_normal((9, 6))
    c = a.T @ a
    w1, v1 = _ckernels.jacobi_eigh(c, 1e-13)
    w2, v2 = _pykernels.jacobi_eigh(c, 1e-13)
    np.testing.assert_allclose(np.sort(w1), np.sort(w2), rtol=1e-13)
    s1 = np.sort(_ckernels.jacobi_svd(a, 1e-13)[1])
    s2 = np.sort(_pykernels.jacobi_svd(a, 1e-13)[1])
    np.testing.assert_allclose(s1, s2, rtol=1e-13)


def test_pure_python_switch():
    import subprocess
    import sys
    code = "from lowrank import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, LOWRANK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.strip()
    assert out == "python"


def test_benchmark_smoke(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    code = bench.main(["--sizes", "4", "--repeat", "1"])
    if bench._ckernels is None:
        assert code == 1
    else:
        assert code == 0
        assert "jacobi_eigh" in capsys.readouterr().out
