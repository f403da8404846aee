import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from exsparse.bse import bse_handle
from exsparse.exbasis import ExcitationString, SparseState
from exsparse.model import ModelConfig, build_lattice
from exsparse.operators import DenseHandle, ShiftedHandle
from exsparse.solvers import (ConvergenceParams, NotConverged, chebyshev_order, linear_solve,
                              lowest_eigenpair, lowest_eigenpairs, power_norm,
                              predicted_iterations, propagate)


def vec(x):
    return SparseState.from_dense(np.asarray(x), list(range(len(x))))


def dense_of(v, n):
    return v.to_dense({k: k for k in range(n)})


def toy_handle():
    I = build_lattice(ModelConfig(n_sites=4, t_hop=0.3, U=1.0, lambda_cd=0.2, lambda_dd=0.1,
                                  R_loc=1.5))
    return bse_handle(I, 1)


def test_params_validation():
    with pytest.raises(ValueError):
        ConvergenceParams(tol=0)
    with pytest.raises(ValueError):
        ConvergenceParams(overlap=0.0)
    with pytest.raises(ValueError):
        ConvergenceParams(overlap=1.5)
    with pytest.raises(ValueError):
        ConvergenceParams(gap_estimate=-1.0)


def test_diagonal_one_iteration():
    e, v, it = lowest_eigenpair(DenseHandle(np.diag([1.0, 2.0, 3.0])), vec([1.0, 0, 0]))
    assert e == 1.0 and it == 1 and dict(v) == {0: 1.0}


def test_toy_matches_dense():
    h = toy_handle()
    A, keys = h.dense()
    assert A.shape == (16, 16)
    v0 = SparseState.from_dense(np.ones(16), keys)
    e, v, _ = lowest_eigenpair(h, v0, ConvergenceParams(tol=1e-12))
    assert e == pytest.approx(np.linalg.eigvalsh(A)[0], abs=1e-10)
    idx = {k: n for n, k in enumerate(keys)}
    x = v.to_dense(idx)
    assert np.linalg.norm(A @ x - e * x) <= 1e-10


def test_k_lowest():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 30)))
    A = Q @ np.diag(np.arange(30.0)) @ Q.T
    A = (A + A.T) / 2
    vals, vecs, _ = lowest_eigenpairs(DenseHandle(A), vec(rng.standard_normal(30)),
                                      ConvergenceParams(tol=1e-10), k=3)
    np.testing.assert_allclose(vals, [0, 1, 2], atol=1e-9)


def test_shift_invariance():
    h = toy_handle()
    keys = h.basis()
    v0 = SparseState.from_dense(np.linspace(1, 2, len(keys)), keys)
    p = ConvergenceParams(tol=1e-11)
    e0, v0_, it0 = lowest_eigenpair(h, v0, p)
    e1, v1_, it1 = lowest_eigenpair(ShiftedHandle(h, 2.5), v0, p)
    assert e1 - e0 == pytest.approx(2.5, abs=1e-10)
    assert it0 == it1
    assert abs(abs(v0_.dot(v1_)) - 1) <= 1e-10


def test_iterations_grow_as_gap_shrinks():
    rng = np.random.default_rng(1)
    bulk = np.sort(rng.uniform(1.0, 10.0, 120))
    counts = []
    for gap in (1.0, 0.3, 0.1, 0.03):
        A = np.diag(np.concatenate([[0.0], gap + bulk - 1.0]))
        _, _, it = lowest_eigenpair(DenseHandle(A), vec(np.ones(121)), ConvergenceParams(tol=1e-8))
        counts.append(it)
    assert counts == sorted(counts) and counts[-1] > counts[0]


def test_eigen_not_converged():
    A = np.diag(np.arange(50.0))
    with pytest.raises(NotConverged) as err:
        lowest_eigenpair(DenseHandle(A), vec(np.ones(50)), ConvergenceParams(tol=1e-12, max_iter=3))
    assert err.value.iterations == 3 and err.value.value is not None


def test_identity_solve():
    b = vec([1.0, -2.0, 0.5, 3.0])
    x, info = linear_solve(DenseHandle(np.eye(4)), b)
    assert info["iterations"] == 1 and dict(x) == pytest.approx(dict(b))


def test_random_dense_solve_and_monotone_residual():
    rng = np.random.default_rng(2)
    A = np.eye(50) * 4 + rng.standard_normal((50, 50)) * 0.3
    b = rng.standard_normal(50)
    x, info = linear_solve(DenseHandle(A), vec(b), ConvergenceParams(tol=1e-13))
    np.testing.assert_allclose(dense_of(x, 50), np.linalg.solve(A, b), atol=1e-10)
    h = info["history"]
    assert all(b2 <= b1 * (1 + 1e-12) for b1, b2 in zip(h, h[1:]))


@settings(max_examples=10, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2 ** 31))
def test_gmres_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    A = np.eye(n) * 3 + rng.standard_normal((n, n)) * 0.4
    b = rng.standard_normal(n)
    x, info = linear_solve(DenseHandle(A), vec(b), ConvergenceParams(tol=1e-10))
    assert np.linalg.norm(A @ dense_of(x, n) - b) <= 1e-10 * np.linalg.norm(b) * 1.01
    assert info["residual"] <= 1e-10 * np.linalg.norm(b)


def test_iterations_follow_condition_number():
    rng = np.random.default_rng(4)
    b = rng.standard_normal(80)
    counts = []
    for kappa in (2.0, 10.0, 100.0, 1000.0):
        A = np.diag(np.geomspace(1.0, kappa, 80))
        _, info = linear_solve(DenseHandle(A), vec(b), ConvergenceParams(tol=1e-10, restart=80))
        counts.append(info["iterations"])
    assert counts == sorted(counts) and counts[-1] > 2 * counts[0]


def test_solve_not_converged_returns_best():
    A = np.diag(np.geomspace(1.0, 1e4, 100))
    with pytest.raises(NotConverged) as err:
        linear_solve(DenseHandle(A), vec(np.ones(100)), ConvergenceParams(tol=1e-12, max_iter=5))
    assert err.value.iterations == 5 and err.value.x is not None


def test_propagate_zero_operator():
    v0 = vec([0.6, 0.8, 0.0])
    for T in (0.0, 1.0, 7.5):
        out = propagate(DenseHandle(np.zeros((3, 3))), v0, T, bounds=(0.0, 0.0))
        assert dict(out) == pytest.approx(dict(v0))


def test_propagate_matches_expm_and_conserves():
    h = toy_handle()
    A, keys = h.dense()
    idx = {k: n for n, k in enumerate(keys)}
    v0 = SparseState.unit(ExcitationString((1,), (5,)))
    p = ConvergenceParams(cheb_cutoff=1e-14)
    x0 = v0.to_dense(idx, complex)
    e0 = np.real(np.conj(x0) @ A @ x0)
    for T in (0.5, 2.0, 6.0):
        vT = propagate(h, v0, T, p)
        x = vT.to_dense(idx, complex)
        np.testing.assert_allclose(x, expm(-1j * A * T) @ x0, atol=1e-10)
        assert abs(vT.norm() - 1) <= 1e-10
        assert np.real(np.conj(x) @ A @ x) == pytest.approx(e0, abs=1e-9)


def test_propagation_composes():
    h = toy_handle()
    v0 = SparseState.unit(ExcitationString((2,), (6,)))
    p = ConvergenceParams(cheb_cutoff=1e-14)
    a = propagate(h, propagate(h, v0, 1.3, p), 2.1, p)
    b = propagate(h, v0, 3.4, p)
    keys = set(a.keys()) | set(b.keys())
    assert max(abs(a[k] - b[k]) for k in keys) <= 1e-9


def test_propagate_order_cap():
    h = toy_handle()
    with pytest.raises(NotConverged):
        propagate(h, SparseState.unit(ExcitationString((1,), (5,))), 100.0,
                  ConvergenceParams(max_iter=10))
    _, info = propagate(h, SparseState.unit(ExcitationString((1,), (5,))), 2.0, return_info=True)
    lo, hi = h.gershgorin()
    assert info["order"] == chebyshev_order(0.5 * (hi - lo) * 2.0, 1e-12)


def test_chebyshev_order_grows_with_time():
    orders = [chebyshev_order(x, 1e-12) for x in (1.0, 10.0, 100.0)]
    assert orders == sorted(orders) and all(o > x for o, x in zip(orders, (1, 10, 100)))


def test_predicted_iterations():
    assert predicted_iterations(ConvergenceParams(gap_estimate=1.0, tol=math.exp(-1))) == 1
    assert predicted_iterations(ConvergenceParams(gap_estimate=0.5, tol=1e-6, overlap=0.1)) == 33
    assert predicted_iterations(ConvergenceParams(gap_estimate=1.0, tol=0.999)) == 1
    assert predicted_iterations(ConvergenceParams(gap_estimate=0.5, tol=1e-6, overlap=0.1,
                                                  C=2.0)) == 65
    with pytest.raises(ValueError):
        predicted_iterations(ConvergenceParams())


def test_power_norm():
    A = np.diag([1.0, -3.0, 2.0])
    assert power_norm(DenseHandle(A)) == pytest.approx(3.0, rel=1e-8)
    rng = np.random.default_rng(5)
    B = rng.standard_normal((20, 20))
    est = power_norm(DenseHandle(B), iters=2000, tol=1e-14)
    assert est <= np.linalg.norm(B, 2) * (1 + 1e-12)
    assert est == pytest.approx(np.linalg.norm(B, 2), rel=1e-6)
    assert power_norm(DenseHandle(np.zeros((4, 4)))) == 0.0
