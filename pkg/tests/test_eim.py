import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowrank.aca import aca2_bivariate, monomials
from lowrank.eim import (
    average,
    column_norms,
    dirac_dictionary,
    eim_continuous_recover,
    eim_greedy,
    eim_interpolant_at,
    eim_interpolate,
    eim_points_for_basis,
    geim_greedy,
    geim_interpolate,
    lebesgue_constant,
)
from lowrank.kernels import ContractError, cond2
from lowrank.pod import pod_basis
from lowrank.sampling import SnapshotMatrix, builtin_family, materialize, uniform_grid

from conftest import low_rank
from test_aca import brute_leja


def cauchy(m, n=None, c=1.0):
    return materialize(builtin_family("cauchy", c=c), uniform_grid(0, 1, m),
                       uniform_grid(0, 1, n or m))


def test_column_norms():
    r = np.array([[3.0, -1.0], [-4.0, 0.0]])
    np.testing.assert_array_equal(column_norms(r, "inf", 0.5), [4.0, 1.0])
    np.testing.assert_array_equal(column_norms(r, 1, 0.5), [3.5, 0.5])
    np.testing.assert_allclose(column_norms(r, 2, 0.5), [np.sqrt(12.5), np.sqrt(0.5)])
    with pytest.raises(ContractError):
        column_norms(r, 3, 1.0)


def test_separable_family():
    g = np.array([0.5, -2.0, 1.0, 2.0])
    snap = SnapshotMatrix.from_array(np.outer(g, [1.0, 3.0, -1.0]))
    es = eim_greedy(snap, 1e-12)
    assert es.Q == 1
    assert es.interp_indices == (1,)
    np.testing.assert_allclose(es.basis[:, 0], g / g[1], rtol=1e-15)


def test_identity_gives_unit_b():
    es = eim_greedy(np.eye(3), 1e-12)
    assert es.Q == 3
    np.testing.assert_array_equal(es.B, np.eye(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_max_norm_pivots_equal_global_aca(seed):
    rng = np.random.default_rng(seed)
    a = low_rank(rng, int(rng.integers(2, 12)), int(rng.integers(2, 10)),
                 int(rng.integers(1, 6)), noise=1e-3)
    es = eim_greedy(a, 1e-9, "inf")
    ca = aca2_bivariate(a, 1e-9, "global")
    assert list(zip(es.interp_indices, es.sample_indices)) == list(zip(ca.tau, ca.sigma))


@pytest.mark.parametrize("p", ["1", "2", "inf"])
def test_b_is_unit_lower_triangular(p):
    es = eim_greedy(cauchy(15), 1e-10, p)
    assert es.Q >= 4
    np.testing.assert_array_equal(np.diag(es.B), 1.0)
    assert np.all(np.triu(es.B, 1) == 0.0)
    assert np.abs(es.B).max() <= 1.0 + 1e-12
    hist = np.array(es.err_history)
    assert hist[-1] < 1e-10


def test_training_columns_reproduced():
    snap = cauchy(12)
    es = eim_greedy(snap, 1e-6)
    for j in es.sample_indices:
        _, vals = eim_interpolate(es, snap.values[:, j])
        np.testing.assert_allclose(vals, snap.values[:, j], rtol=0, atol=1e-13)
    g, _ = eim_interpolate(es, es.basis[:, 0])
    np.testing.assert_allclose(g, np.eye(es.Q)[0], atol=1e-15)


def test_new_column_within_lebesgue_factor():
    snap = cauchy(20)
    es = eim_greedy(snap, 1e-6)
    lam = lebesgue_constant(es)[-1]
    src = builtin_family("cauchy", c=1.0)
    h = es.basis
    for y in (0.0137, 0.49, 0.951):
        f = src(snap.grid_x.points, y)
        _, vals = eim_interpolate(es, f)
        coef = np.linalg.lstsq(h, f, rcond=None)[0]
        best = np.abs(f - h @ coef).max()
        assert np.abs(f - vals).max() <= (1 + lam) * best * (1 + 1e-9)


def test_continuous_recovery_on_grid():
    snap = cauchy(15)
    es = eim_greedy(snap, 1e-8)
    ev = eim_continuous_recover(es, builtin_family("cauchy", c=1.0))
    got = ev(snap.grid_x.points)
    # the recursion divides by s_qq, so rounding grows like max|f| / |s_qq|
    scale = np.abs(snap.values).max()
    for q in range(es.Q):
        tol = 1e-13 * scale / abs(es.recovery[q, q])
        assert np.abs(got[:, q] - es.basis[:, q]).max() <= tol


def test_continuous_recovery_separable():
    src = builtin_family("product", g=np.exp, h=np.sin)
    gx = uniform_grid(0.0, 1.0, 9)
    snap = materialize(src, gx, uniform_grid(0.5, 2.0, 6))
    es = eim_greedy(snap, 1e-12)
    assert es.Q == 1
    x1 = gx.points[es.interp_indices[0]]
    x = np.array([0.05, 0.33, 0.71])
    np.testing.assert_allclose(eim_continuous_recover(es, src)(x)[:, 0],
                               np.exp(x) / np.exp(x1), rtol=1e-14)


def test_off_grid_interpolant_close_to_fine_grid():
    src = builtin_family("cauchy", c=1.0)
    tol = 1e-8
    coarse = materialize(src, uniform_grid(0, 1, 21), uniform_grid(0, 1, 21))
    es = eim_greedy(coarse, tol)
    fine = uniform_grid(0, 1, 201).points
    ys = np.array([0.025, 0.475, 0.975])
    got = eim_interpolant_at(es, src, fine, ys)
    want = src(fine[:, None], ys[None, :])
    assert np.abs(got - want).max() <= 10 * tol


def test_lebesgue_constants():
    es = eim_greedy(cauchy(20), 1e-12)
    lam = lebesgue_constant(es)
    assert lam[0] == 1.0
    q = np.arange(1, lam.size + 1)
    assert np.all(lam <= 2.0 ** q - 1 + 1e-9)


def test_monomial_lebesgue_matches_lagrange():
    grid = uniform_grid(-1.0, 1.0, 201)
    t = grid.points
    es = eim_points_for_basis(monomials(t, 7), grid)
    assert list(es.interp_indices) == brute_leja(t, 7)
    lam = lebesgue_constant(es)
    for q in range(1, 8):
        nodes = t[list(es.interp_indices[:q])]
        total = np.zeros_like(t)
        for i in range(q):
            li = np.ones_like(t)
            for j in range(q):
                if j != i:
                    li *= (t - nodes[j]) / (nodes[i] - nodes[j])
            total += np.abs(li)
        assert lam[q - 1] == pytest.approx(total.max(), rel=1e-10)


def test_points_for_monomials_are_leja():
    grid = uniform_grid(-1.0, 1.0, 1001)
    es = eim_points_for_basis(monomials(grid.points, 3), grid)
    assert es.interp_indices == (0, 1000, 500)


def test_points_for_axis_vectors():
    basis = np.eye(6)[:, [4, 1, 3]]
    assert eim_points_for_basis(basis).interp_indices == (4, 1, 3)


def test_points_for_pod_basis():
    snap = cauchy(20)
    pod = pod_basis(snap, 5)
    es = eim_points_for_basis(pod.basis, snap.grid_x)
    assert es.Q == 5
    assert np.isfinite(cond2(es.B))


def test_points_for_dependent_basis():
    w = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0) + 1])
    with pytest.raises(ContractError, match="vector 2"):
        eim_points_for_basis(w)


def test_invalid_arguments():
    with pytest.raises(ContractError):
        eim_greedy(np.eye(3), 1e-6, "3")
    with pytest.raises(ContractError):
        eim_greedy(np.eye(3), 1e-6, max_rank=-1)
    es = eim_greedy(np.eye(3), 1e-6)
    with pytest.raises(ContractError):
        eim_interpolate(es, np.ones(4))
    with pytest.raises(ContractError):
        lebesgue_constant(es, 4)


# --- generalized EIM -------------------------------------------------------

@pytest.mark.parametrize("p", ["1", "2", "inf"])
def test_geim_dirac_reduces_to_eim(p):
    snap = cauchy(14)
    es = eim_greedy(snap, 1e-9, p)
    gs = geim_greedy(snap, dirac_dictionary(14), 1e-9, p)
    assert gs.sample_indices == es.sample_indices
    assert gs.functional_indices == es.interp_indices
    np.testing.assert_array_equal(gs.basis, es.basis)


def test_geim_average_rank_one():
    g = np.array([1.0, 2.0, 4.0, 3.0])
    a = np.outer(g, [1.0, -2.0, 0.5])
    gs = geim_greedy(a, [average(4)], 1e-12)
    assert gs.Q == 1
    f = 7.0 * g
    assert gs.moments(geim_interpolate(gs, f)[1])[0] == pytest.approx(average(4)(f), rel=1e-15)
    np.testing.assert_allclose(geim_interpolate(gs, f)[1], f, rtol=1e-14)


def test_geim_mixed_dictionary_rank_two():
    a = low_rank(np.random.default_rng(31), 4, 4, 2)
    dictionary = dirac_dictionary(4) + [average(4)]
    gs = geim_greedy(a, dictionary, 1e-10)
    assert gs.Q == 2
    assert np.abs(gs.B).max() <= 1.0 + 1e-12
    assert gs.err_history[-1] < 1e-10
    assert len(gs.lebesgue_l2) == 2


def test_geim_rejects_mismatched_dictionary():
    with pytest.raises(ContractError):
        geim_greedy(np.eye(3), dirac_dictionary(4), 1e-6)
    with pytest.raises(ContractError):
        geim_greedy(np.eye(3), [], 1e-6)
