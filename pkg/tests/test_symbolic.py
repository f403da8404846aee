from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from exsparse.symbolic import SYMBOLS, CostExpr, IncomparableCosts, Rc, Vol, d

exps = st.dictionaries(st.sampled_from(SYMBOLS),
                       st.fractions(min_value=-5, max_value=5, max_denominator=4), max_size=4)


def test_construction_and_str():
    assert str(CostExpr(d=7, R_c=9)) == "d^7 * Rc^9"
    assert str(CostExpr(V=1, d=1, R_c=6)) == "V * d * Rc^6"
    assert str(CostExpr.one()) == "1"
    assert str(CostExpr.one(polylog=True)) == "1 * polylog"
    assert str(CostExpr(L_c=Fraction(3, 2))) == "Lc^(3/2)"
    assert CostExpr(d=0).exps == ()
    with pytest.raises(KeyError):
        CostExpr(x=1)


def test_lc_substitution():
    assert CostExpr(d=19, R_c=21).with_lc() == CostExpr(R_c=2, L_c=19)
    assert CostExpr(d=18, R_c=12).with_lc() == CostExpr(d=6, L_c=12)
    assert CostExpr(L_c=12).expand() == CostExpr(d=12, R_c=12)
    assert CostExpr(L_c=2, d=1).same_as(CostExpr(d=3, R_c=2))


def test_sum_keeps_dominant():
    assert (d(7) * Rc(9) + CostExpr.one(polylog=True)) == CostExpr(d=7, R_c=9)
    assert (Vol() * Rc(3) + Vol() * d() * Rc(3)) == CostExpr(V=1, d=1, R_c=3)
    assert (d() + d()).polylog is False
    assert (d() + CostExpr(d=1, polylog=True)).polylog is True
    with pytest.raises(IncomparableCosts):
        d(2) + Rc(3)


@given(exps, exps)
def test_group_laws(a, b):
    A, B = CostExpr(a), CostExpr(b)
    assert A * B == B * A
    assert (A * B) / B == A
    assert (A ** 2).same_as(A * A)
    assert (A / A) == CostExpr.one()
    assert A.expand().with_lc().same_as(A)


@given(exps, exps)
def test_dominance_sum(a, b):
    A, B = CostExpr(a), CostExpr(b)
    try:
        S = A + B
    except IncomparableCosts:
        assert not A.dominates(B) and not B.dominates(A)
        return
    assert S.dominates(A) and S.dominates(B)
    assert S.same_as(A) or S.same_as(B)


@given(st.integers(1, 30), st.integers(1, 30))
def test_homogeneity(p, q):
    e = d(p) * Rc(q)
    lam = d()
    assert (e * lam ** 3)["d"] == p + 3


def test_json():
    j = CostExpr(V=1, d=Fraction(1, 2), polylog=True).to_json()
    assert j == {"expr": "V * d^(1/2) * polylog", "exponents": {"V": "1", "d": "1/2"},
                 "polylog": True}
