import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import fockspace as F
from exsparse.exbasis import ExcitationString, RankMismatch, basis
from exsparse.lcc import (DegenerateDenominator, Liouvillian, correlation_energy, dense_system,
                          dump_amplitudes, lcc_solve, liouvillian_row, mp2_guess, rhs)
from exsparse.model import ModelConfig, TabulatedIntegrals, build_lattice, decoupled_fragments
from exsparse.solvers import ConvergenceParams, NotConverged

INTERACTING = dict(t_hop=0.3, U=1.0, lambda_cd=0.2, lambda_dd=0.15, R_loc=1.5)


def commutator_oracle(I, m):
    """<mu|[H, O_nu]|0> and -<mu|H|0> from explicit fermion matrices."""
    L = I.L
    H = F.hamiltonian(I.dense_t(), I.dense_V())
    vac = F.vacuum(I.n_occ, L)
    keys = basis(I.spec(m), range(1, m + 1))
    O = [F.string_operator(s.holes, s.particles, L) for s in keys]
    bra = np.array([o @ vac for o in O])
    M = bra @ np.array([(H @ o - o @ H) @ vac for o in O]).T
    return M, -(bra @ (H @ vac)), keys


@pytest.mark.parametrize("n,m", [(2, 2), (3, 2), (3, 3)])
def test_liouvillian_matches_commutator(n, m):
    I = build_lattice(ModelConfig(n_sites=n, R_c=2.0, **INTERACTING))
    Mo, bo, keys = commutator_oracle(I, m)
    M, b, k2 = dense_system(I, m)
    assert k2 == keys
    np.testing.assert_allclose(M, Mo, atol=1e-12)
    np.testing.assert_allclose(b, bo, atol=1e-12)
    lv = Liouvillian(I, m)
    Mr = np.array([[lv.row(mu).get(nu, 0.0) for nu in keys] for mu in keys])
    np.testing.assert_allclose(Mr, Mo, atol=1e-12)


def test_rows_and_columns_agree():
    I = build_lattice(ModelConfig(n_sites=5, R_c=1.0, **INTERACTING))
    lv = Liouvillian(I, 3)
    keys = basis(lv.spec, range(1, 4))
    rows = {mu: lv.row(mu) for mu in keys}
    for nu in keys:
        for mu, v in lv.column(nu).items():
            assert rows[mu][nu] == pytest.approx(v, abs=1e-14)
    assert sum(len(c) for c in rows.values()) == sum(len(lv.column(nu)) for nu in keys)


def test_doubles_diagonal_leading_term():
    I = build_lattice(ModelConfig(n_sites=4, t_hop=0.1, U=0.01, lambda_cd=0.001,
                                  lambda_dd=0.001))
    N = 4
    mu = ExcitationString((2, 1), (N + 2, N + 1))
    f = I.f
    lead = f(N + 2, N + 2) + f(N + 1, N + 1) - f(1, 1) - f(2, 2)
    assert liouvillian_row(I, I.spec(2), mu)[mu] == pytest.approx(lead, abs=0.05)


def test_rhs_values():
    I = build_lattice(ModelConfig(n_sites=3, R_c=2.0, **INTERACTING))
    spec = I.spec(3)
    assert rhs(I, spec, ExcitationString((1,), (4,))) == 0.0
    assert rhs(I, spec, ExcitationString((2, 1, 0), (5, 4, 3))) == 0.0
    i, j, a, b = 1, 0, 4, 3
    expect = -(I.V(a, b, i, j) - I.V(a, b, j, i))
    assert rhs(I, spec, ExcitationString((i, j), (a, b))) == pytest.approx(expect, abs=1e-15)
    with pytest.raises(RankMismatch):
        rhs(I, I.spec(2), ExcitationString((2, 1, 0), (5, 4, 3)))


def test_mp2_zero_without_interaction():
    I = build_lattice(ModelConfig(n_sites=6, U=0, lambda_cd=0, lambda_dd=0))
    assert mp2_guess(I, I.spec(2)).support == 0
    t, rep = lcc_solve(I, I.spec(2))
    assert rep.E_c == 0.0 and t.support == 0 and rep.iterations <= 1


def _toy(gap, v, t_mix=0.0):
    """Two holes (0, 1) and two particles (2, 3) with one double coupling."""
    t = np.diag([-gap / 2, -gap / 2, gap / 2, gap / 2])
    V = np.zeros((4,) * 4)
    for p, q, r, s in [(2, 3, 0, 1), (0, 1, 2, 3), (3, 2, 1, 0), (1, 0, 3, 2)]:
        V[p, q, r, s] = v
    return TabulatedIntegrals.from_arrays(2, t, V)


def test_mp2_plug_in_value():
    I = _toy(2.0, 0.1)
    (s, v), = dict(mp2_guess(I, I.spec(2))).items()
    (k, h), = Liouvillian(I, 2).local_doubles()
    # <kappa|H|0> = V_abij - V_abji = 0.1, denominator 2 * (-1) - 2 * 1 = -4
    assert k == s and h == pytest.approx(0.1, abs=1e-15)
    assert v == pytest.approx(-0.025, abs=1e-15)


def test_degenerate_denominator():
    t = np.diag([0.0, 0.0, 0.0, 0.0])
    V = np.zeros((4,) * 4)
    for p, q, r, s in [(2, 3, 0, 1), (0, 1, 2, 3), (3, 2, 1, 0), (1, 0, 3, 2)]:
        V[p, q, r, s] = 0.1
    I = TabulatedIntegrals.from_arrays(2, t, V)
    with pytest.raises(DegenerateDenominator) as err:
        mp2_guess(I, I.spec(2))
    assert err.value.string == ExcitationString((1, 0), (3, 2))


def test_two_site_toy_matches_dense_solve():
    I = build_lattice(ModelConfig(n_sites=2, R_c=2.0, **INTERACTING))
    M, b, keys = dense_system(I, 2)
    x = np.linalg.solve(M, b)
    lv = Liouvillian(I, 2)
    h = dict(lv.local_doubles())
    E = sum(h[s] * x[n] for n, s in enumerate(keys) if s in h)
    t, rep = lcc_solve(I, I.spec(2), tol=1e-12)
    assert rep.converged and rep.E_c == pytest.approx(E, abs=1e-10)
    assert rep.residual <= 1e-12 * np.linalg.norm(b)


def test_support_linear_in_N():
    counts = []
    sizes = [10, 14, 18, 22]
    for n in sizes:
        I = build_lattice(ModelConfig(n_sites=n, R_c=2.0, **INTERACTING))
        lv = Liouvillian(I, 2)
        counts.append(mp2_guess(I, I.spec(2), lv=lv).support)
        assert lv.rhs_vector().support == len(lv.local_doubles())
    slopes = np.diff(counts) / np.diff(sizes)
    assert slopes.min() > 0 and slopes.max() / slopes.min() <= 1.05


def test_weak_coupling_third_order():
    base = ModelConfig(n_sites=6, R_c=2.0, **INTERACTING)
    ratios = []
    for lam in (0.02, 0.04, 0.08):
        I = build_lattice(base.scaled(lam))
        _, rep = lcc_solve(I, I.spec(2), tol=1e-13)
        ratios.append(abs(rep.E_c - rep.E_mp2) / lam ** 3)
    assert max(ratios) / min(ratios) < 1.5


def test_connectedness_random_pairs():
    I = build_lattice(ModelConfig(n_sites=12, R_c=1.0, R_loc=1.0, t_hop=0.3, U=1.0,
                                  lambda_cd=0.2, lambda_dd=0.1))
    lv = Liouvillian(I, 2)
    keys = basis(lv.spec, [1, 2])
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(20000):
        mu, nu = (keys[k] for k in rng.integers(len(keys), size=2))
        smu = {p % 12 for p in mu.holes + mu.particles}
        snu = {p % 12 for p in nu.holes + nu.particles}
        if set(mu.holes + mu.particles) & set(nu.holes + nu.particles):
            continue
        if min(abs(a - b) for a in smu for b in snu) <= 1:
            continue
        # kappa = mu \ nu must not be a rank-2 superset case
        if set(nu.holes) <= set(mu.holes):
            continue
        assert lv.element(mu, nu) == 0.0
        checked += 1
    assert checked > 100


@settings(max_examples=8, deadline=None)
@given(st.integers(2, 3), st.floats(0.0, 0.4), st.floats(0.2, 1.5), st.floats(0.0, 0.3))
def test_extensive_fragments(n, t_hop, U, lam):
    cfg = ModelConfig(n_sites=n, t_hop=t_hop, U=U, lambda_cd=lam, lambda_dd=lam / 2, R_c=1.0,
                      R_loc=1.0)
    one = lcc_solve(I := decoupled_fragments(cfg, 1), I.spec(2), tol=1e-13)[1].E_c
    two = lcc_solve(J := decoupled_fragments(cfg, 2), J.spec(2), tol=1e-13)[1].E_c
    assert two == pytest.approx(2 * one, abs=1e-10)


def test_not_converged_carries_report():
    I = build_lattice(ModelConfig(n_sites=6, R_c=2.0, **INTERACTING))
    with pytest.raises(NotConverged) as err:
        lcc_solve(I, I.spec(2), params=ConvergenceParams(tol=1e-14, max_iter=2))
    rep = err.value.report
    assert rep is not None and not rep.converged and rep.iterations == 2
    assert err.value.x.support > 0 and len(rep.support_trace) >= 1


def test_dump_amplitudes_format(tmp_path):
    I = build_lattice(ModelConfig(n_sites=3, R_c=2.0, **INTERACTING))
    t, _ = lcc_solve(I, I.spec(2), tol=1e-12)
    path = dump_amplitudes(t, I.spec(2), tmp_path / "amps.txt")
    lines = path.read_text().splitlines()
    assert len(lines) == t.support
    for line in lines:
        tok = line.split()
        assert tok[0] == "t"
        k = int(tok[1])
        assert len(tok) == 2 + 2 * k + 1
        s = ExcitationString(tuple(map(int, tok[2:2 + k])), tuple(map(int, tok[2 + k:2 + 2 * k])))
        assert float(tok[-1]) == t[s]


def test_correlation_energy_counts_each_double_once():
    I = _toy(2.0, 0.1)
    lv = Liouvillian(I, 2)
    t = mp2_guess(I, I.spec(2), lv=lv)
    # single canonical double: E = h^2 / D
    assert correlation_energy(lv, t) == pytest.approx(0.01 / -4.0, abs=1e-15)


def test_needs_doubles_manifold():
    I = build_lattice(ModelConfig(n_sites=3))
    with pytest.raises(RankMismatch):
        lcc_solve(I, I.spec(1))
