"""Asymptotic quantum cost model and speedup table.

Quantum cost per scenario:

* BSE eigenvalues/dynamics: ``(C_init + C_BE s d) / gamma``;
* LCC: ``(C_init + C_BE s d) * R_c^D`` (amplitude-estimation readout),

with ``s = R_c^D``.  ``C_BE`` is the data-loading cost of the block
encoding: the integral list for ``integrals``, per-atom data for
``atomic`` and a constant for ``crystal``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .lightcone import classical_cost_expr
from .symbolic import CostExpr

INPUT_MODELS = ("integrals", "atomic", "crystal")
METHODS = ("bse", "lcc")


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    method: str = "bse"
    input_model: str = "integrals"
    m: int = 3
    D: int = 3
    com_delocalized: bool = False
    include_overlap: bool = False
    include_readout: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.input_model not in INPUT_MODELS:
            raise ValueError(f"input_model must be one of {INPUT_MODELS}")
        if self.m < 1 or self.D < 1:
            raise ValueError("m and D must be >= 1")
        if self.method == "lcc" and self.com_delocalized:
            raise ValueError("com_delocalized applies to BSE only")


def block_encoding_cost(sc: ScenarioConfig) -> CostExpr:
    D = sc.D
    if sc.method == "bse":
        return {"integrals": CostExpr(L_c=2 * D), "atomic": CostExpr(L_c=D),
                "crystal": CostExpr.one(polylog=True)}[sc.input_model]
    return {"integrals": CostExpr(V=1, R_c=D), "atomic": CostExpr(V=1),
            "crystal": CostExpr.one(polylog=True)}[sc.input_model]


def prep_cost(kind: str, D: int = 3) -> CostExpr:
    """Initial-state preparation: unit vector, HF state, loaded amplitudes,
    or a translation-invariant fill."""
    if kind == "unit":
        return CostExpr.one()
    if kind == "hartree_fock":
        return CostExpr.one(polylog=True)
    if kind == "amplitude_load":
        return CostExpr(V=1, R_c=D)
    if kind == "crystal_fill":
        return CostExpr.one(polylog=True)
    raise ValueError(f"unknown preparation kind {kind!r}")


def init_cost(sc: ScenarioConfig) -> CostExpr:
    if sc.method == "bse":
        return prep_cost("hartree_fock", sc.D)
    return prep_cost("crystal_fill" if sc.input_model == "crystal" else "amplitude_load", sc.D)


def quantum_cost(sc: ScenarioConfig) -> CostExpr:
    s = CostExpr(R_c=sc.D)
    core = init_cost(sc) + block_encoding_cost(sc) * s * CostExpr(d=1)
    if sc.method == "bse":
        if sc.include_overlap:
            core = core * CostExpr(inv_gamma=1)
    elif sc.include_readout:
        core = core * CostExpr(R_c=sc.D)
    return core.expand()


def classical_cost(sc: ScenarioConfig) -> CostExpr:
    return classical_cost_expr(sc.method, sc.m, sc.D, crystal=sc.input_model == "crystal",
                               com_delocalized=sc.com_delocalized)


def sig_figs(x: Fraction | float, n: int = 2) -> Decimal:
    """Round to ``n`` significant figures, halves away from zero."""
    q = Decimal(x.numerator) / Decimal(x.denominator) if isinstance(x, Fraction) else Decimal(repr(x))
    if q == 0:
        return Decimal(0)
    exp = q.adjusted() - n + 1
    return q.quantize(Decimal(1).scaleb(exp), rounding=ROUND_HALF_UP)


@dataclass
class Speedup:
    ratio: CostExpr
    power: tuple            # (a1/a2, b1/b2) from raw d and R_c exponents
    power_table: tuple      # table convention (differs for LCC)
    classical: CostExpr
    quantum: CostExpr

    def power_display(self, table: bool = True) -> tuple:
        p = self.power_table if table else self.power
        return tuple(sig_figs(x) if x is not None else None for x in p)


def _fmt(x) -> str:
    if x is None:
        return "inf"
    return str(int(x)) if x == int(x) else str(x)


def _div(a, b):
    return None if b == 0 else Fraction(a) / Fraction(b)


def speedup(sc: ScenarioConfig) -> Speedup:
    """Classical over quantum cost and the power pair.

    The power pair divides the classical ``d`` and ``R_c`` exponents by the
    quantum ones.  The tabulated LCC entries instead divide the classical
    ``d`` exponent by the ``d`` power left in front of ``L_c`` in the
    ratio; ``power_table`` follows that convention for LCC.
    """
    cl, qu = classical_cost(sc), quantum_cost(sc)
    ratio = (cl / qu)
    ratio = CostExpr(ratio.as_dict(), polylog=False).with_lc()
    a1, b1 = cl["d"], cl["R_c"]
    power = (_div(a1, qu["d"]), _div(b1, qu["R_c"]))
    table = power
    if sc.method == "lcc" and ratio["d"] != 0:
        table = (_div(a1, ratio["d"]), power[1])
    return Speedup(ratio, power, table, cl, qu)


def qubit_count(L: int, m: int) -> dict:
    """Register size for one rank-m string over L orbitals.

    ``packed``: 2m fields of ceil(log2 L) bits.  ``rounded``: m times the
    rounded figure 2 log2 L per excitation.  ``unrounded``: 2m log2 L.
    """
    if L < 2 or m < 1:
        raise ValueError("need L >= 2 and m >= 1")
    bits = max(1, math.ceil(math.log2(L)))
    return {"packed": 2 * m * bits,
            "rounded": m * round(2 * math.log2(L)),
            "unrounded": 2 * m * math.log2(L)}


def subnormalization(handle, check: bool = True, scan: bool = True) -> float:
    """``alpha = s_max * max|A_ij|`` over the whole basis; with ``check``,
    confirm the power-iteration norm does not exceed it."""
    from .solvers import power_norm
    if scan:
        handle.scan()
    alpha = handle.alpha
    if check:
        nrm = power_norm(handle)
        if nrm > alpha * (1 + 1e-9):
            raise InvariantViolation(f"||A||_2 ~ {nrm} exceeds alpha = {alpha}")
    return alpha


# -- the table -------------------------------------------------------------------------------

def table_one(m: int = 3, D: int = 3) -> dict:
    rows = []
    for model in INPUT_MODELS:
        row = {"input_model": model}
        for method in METHODS:
            sp = speedup(ScenarioConfig(method, model, m, D))
            row[method] = {
                "quantum_cost": str(sp.quantum),
                "classical_cost": str(sp.classical),
                "ratio": str(sp.ratio),
                "power": [_fmt(x) for x in sp.power_display(table=True)],
                "power_raw": [_fmt(x) for x in sp.power_display(table=False)],
                "power_exact": [str(x) for x in sp.power],
            }
        rows.append(row)
    return {"m": m, "D": D, "rows": rows}


def render_table(tab: dict) -> str:
    head = ["input", "method", "quantum cost", "speedup ratio", "power", "power (raw)"]
    lines = []
    for row in tab["rows"]:
        for method in METHODS:
            r = row[method]
            lines.append([row["input_model"], method, r["quantum_cost"], r["ratio"],
                          "(" + ", ".join(r["power"]) + ")",
                          "(" + ", ".join(r["power_raw"]) + ")"])
    widths = [max(len(h), *(len(l[c]) for l in lines)) for c, h in enumerate(head)]
    fmt = "  ".join("{:<%d}" % w for w in widths)
    out = [f"m={tab['m']} D={tab['D']}", fmt.format(*head).rstrip(),
           fmt.format(*("-" * w for w in widths)).rstrip()]
    out += [fmt.format(*l).rstrip() for l in lines]
    return "\n".join(out) + "\n"


def scenario_dict(sc: ScenarioConfig) -> dict:
    sp = speedup(sc)
    return {"scenario": asdict(sc), "quantum_cost": sp.quantum.to_json(),
            "classical_cost": sp.classical.to_json(), "ratio": sp.ratio.to_json(),
            "power": [_fmt(x) for x in sp.power_display(table=True)],
            "power_raw": [_fmt(x) for x in sp.power_display(table=False)],
            "power_exact": [str(x) for x in sp.power]}
