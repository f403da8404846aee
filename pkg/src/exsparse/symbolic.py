"""Monomial cost expressions with rational exponents.

Polylogarithmic factors are tracked by a flag, never as exponents.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

SYMBOLS = ("V", "d", "R_c", "L_c", "inv_gamma", "inv_eps")
_DISPLAY = {"V": "V", "d": "d", "R_c": "Rc", "L_c": "Lc", "inv_gamma": "1/gamma",
            "inv_eps": "1/eps"}


class IncomparableCosts(ValueError):
    """Neither summand dominates the other."""


def _clean(exps) -> dict:
    out = {}
    for k, v in dict(exps).items():
        if k not in SYMBOLS:
            raise KeyError(f"unknown symbol {k!r}")
        v = Fraction(v)
        if v:
            out[k] = v
    return out


@dataclass(frozen=True)
class CostExpr:
    exps: tuple = ()
    polylog: bool = False

    def __init__(self, exps=None, polylog: bool = False, **kw):
        merged = dict(exps or {})
        merged.update(kw)
        object.__setattr__(self, "exps", tuple(sorted(_clean(merged).items(),
                                                      key=lambda kv: SYMBOLS.index(kv[0]))))
        object.__setattr__(self, "polylog", bool(polylog))

    @classmethod
    def one(cls, polylog: bool = False) -> "CostExpr":
        return cls({}, polylog)

    def __getitem__(self, sym) -> Fraction:
        return dict(self.exps).get(sym, Fraction(0))

    def as_dict(self) -> dict:
        return dict(self.exps)

    # algebra
    def __mul__(self, other: "CostExpr") -> "CostExpr":
        e = self.as_dict()
        for k, v in other.exps:
            e[k] = e.get(k, 0) + v
        return CostExpr(e, self.polylog or other.polylog)

    def __truediv__(self, other: "CostExpr") -> "CostExpr":
        return self * other ** -1

    def __pow__(self, n) -> "CostExpr":
        n = Fraction(n)
        return CostExpr({k: v * n for k, v in self.exps}, self.polylog)

    def expand(self) -> "CostExpr":
        """Replace ``L_c`` by ``d * R_c``."""
        e = self.as_dict()
        lc = e.pop("L_c", 0)
        if lc:
            e["d"] = e.get("d", 0) + lc
            e["R_c"] = e.get("R_c", 0) + lc
        return CostExpr(e, self.polylog)

    def with_lc(self) -> "CostExpr":
        """Collect the common power of ``d`` and ``R_c`` into ``L_c``."""
        e = self.expand().as_dict()
        k = min(e.get("d", 0), e.get("R_c", 0))
        if k > 0:
            e["d"] -= k
            e["R_c"] -= k
            e["L_c"] = k
        return CostExpr(e, self.polylog)

    def dominates(self, other: "CostExpr") -> bool:
        a, b = self.expand(), other.expand()
        return all(a[s] >= b[s] for s in SYMBOLS)

    def __add__(self, other: "CostExpr") -> "CostExpr":
        """Asymptotic sum: the dominant monomial (polylog flags merge when tied)."""
        if self.dominates(other) and other.dominates(self):
            return CostExpr(self.as_dict(), self.polylog or other.polylog)
        if self.dominates(other):
            return self
        if other.dominates(self):
            return other
        raise IncomparableCosts(f"{self} and {other} are not comparable")

    def same_as(self, other: "CostExpr") -> bool:
        """Exponent equality after expanding ``L_c``."""
        return self.expand().exps == other.expand().exps

    def __str__(self):
        parts = []
        for k, v in self.exps:
            name = _DISPLAY[k]
            if v == 1:
                parts.append(name)
            else:
                parts.append(f"{name}^{v}" if v.denominator == 1 else f"{name}^({v})")
        s = " * ".join(parts) if parts else "1"
        return s + " * polylog" if self.polylog else s

    def to_json(self) -> dict:
        return {"expr": str(self), "exponents": {k: str(v) for k, v in self.exps},
                "polylog": self.polylog}


def d(n=1):
    return CostExpr(d=n)


def Rc(n=1):
    return CostExpr(R_c=n)


def Vol(n=1):
    return CostExpr(V=n)
