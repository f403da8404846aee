"""Linearized coupled cluster in the string basis.

The amplitude equations ``sum_nu <mu|[H, O_nu]|0> t_nu = -<mu|H|0>`` are
solved over ranks ``1..m_max``.  Matrix elements come from Slater-Condon
values with the disconnected piece removed:

    M[mu, nu] = <mu|H|nu> - <mu|O_nu H|0>,

where the second term is nonzero only when nu's quasiparticles are a subset
of mu's.  Columns of M are local (every surviving element touches nu);
rows are not, because de-exciting any local double anywhere in the system
is connected.  Matvecs therefore scatter by columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .exbasis import (DEFAULT_DROP, BasisSpec, Determinant, ExcitationString, RankMismatch,
                      SparseState, basis as full_basis, canonicalize, dimension, encode,
                      from_determinant, slater_condon, to_determinant)
from .model import IntegralSet
from .operators import OperatorHandle
from .solvers import ConvergenceParams, NotConverged, linear_solve


class DegenerateDenominator(ArithmeticError):
    def __init__(self, string, denom):
        self.string = string
        self.denominator = denom
        super().__init__(f"MP2 denominator {denom:.3e} for {string}")


@dataclass
class SolveReport:
    E_c: float
    iterations: int
    residual: float
    converged: bool
    support_trace: list = field(default_factory=list)
    E_mp2: float = 0.0
    dimension_touched: int = 0

    def to_dict(self) -> dict:
        return {"E_c": self.E_c, "E_mp2": self.E_mp2, "iterations": self.iterations,
                "residual": self.residual, "converged": self.converged,
                "support_trace": list(self.support_trace)}


class Liouvillian:
    """Element, row and column oracles of M for one integral set."""

    def __init__(self, I: IntegralSet, m_max: int, drop: float = DEFAULT_DROP):
        self.I = I
        self.spec = I.spec(m_max)
        self.m_max = m_max
        self.drop = drop
        self.hf = Determinant.hartree_fock(self.spec)
        self.E_HF = slater_condon(self.hf, self.hf, I)
        self._det: dict = {}
        self._hk: dict = {}
        self._doubles = None

    # -- helpers ----------------------------------------------------------------

    def det(self, s: ExcitationString) -> tuple[Determinant, int]:
        got = self._det.get(s)
        if got is None:
            got = to_determinant(s, self.spec)
            self._det[s] = got
        return got

    def h0(self, s: ExcitationString) -> float:
        """<s|H|0>."""
        got = self._hk.get(s)
        if got is None:
            d, ph = self.det(s)
            got = ph * slater_condon(d, self.hf, self.I)
            self._hk[s] = got
        return got

    def check_rank(self, s: ExcitationString) -> None:
        if not 1 <= s.rank <= self.m_max:
            raise RankMismatch(f"rank {s.rank} outside 1..{self.m_max}")

    def local_doubles(self) -> list[tuple[ExcitationString, float]]:
        """Every canonical double with nonzero ``<kappa|H|0>``."""
        if self._doubles is None:
            I, n = self.I, self.spec.n_occ
            found = {}
            for i in range(n):
                near_i = [p for p in I.neighbors(i)]
                for j in near_i:
                    if j >= n or j >= i:
                        continue
                    region = sorted(set(I.neighbors(i)) | set(I.neighbors(j)))
                    virt = [a for a in region if a >= n]
                    for a, b in combinations(virt, 2):
                        s = ExcitationString((i, j), (b, a))
                        if s in found:
                            continue
                        v = self.h0(s)
                        found[s] = v
            self._doubles = sorted(((s, v) for s, v in found.items() if abs(v) > self.drop),
                                   key=lambda sv: encode(sv[0], self.spec))
        return self._doubles

    # -- elements -----------------------------------------------------------------

    def element(self, mu: ExcitationString, nu: ExcitationString) -> float:
        dm, pm = self.det(mu)
        dn, pn = self.det(nu)
        val = pm * pn * slater_condon(dm, dn, self.I)
        if set(nu.holes) <= set(mu.holes) and set(nu.particles) <= set(mu.particles):
            kh = tuple(i for i in mu.holes if i not in nu.holes)
            kp = tuple(a for a in mu.particles if a not in nu.particles)
            if not kh:
                val -= self.E_HF
            else:
                kappa = ExcitationString(kh, kp)
                sign = canonicalize(nu.holes + kh, nu.particles + kp).sign
                val -= sign * self.h0(kappa)
        return val

    def _neighbors_of(self, s: ExcitationString, occ: int) -> set:
        """Strings reached from ``s`` by single or double replacements that
        touch (or sit next to) one of its quasiparticles."""
        I, L = self.I, self.spec.L
        quasi = set(s.holes) | set(s.particles)
        if not quasi:
            return set()
        out = set()
        seen_moves = set()
        for x in sorted(quasi):
            region = sorted({x, *I.neighbors(x)})
            filled = [p for p in region if occ >> p & 1]
            empty = [p for p in region if not occ >> p & 1]
            for r in filled:
                for p in empty:
                    if (r, p) in seen_moves:
                        continue
                    seen_moves.add((r, p))
                    out.add(occ ^ (1 << r) ^ (1 << p))
            for r1, r2 in combinations(filled, 2):
                for p1, p2 in combinations(empty, 2):
                    if x not in (r1, r2, p1, p2):
                        continue
                    out.add(occ ^ (1 << r1) ^ (1 << r2) ^ (1 << p1) ^ (1 << p2))
        out.add(occ)
        strings = set()
        for o in out:
            t, _ = from_determinant(Determinant(o, L), self.spec)
            if 1 <= t.rank <= self.m_max:
                strings.add(t)
        return strings

    def column(self, nu: ExcitationString) -> dict:
        """Nonzero ``M[mu, nu]`` as ``{mu: value}``."""
        self.check_rank(nu)
        dn, _ = self.det(nu)
        out = {}
        for mu in self._neighbors_of(nu, dn.occ):
            v = self.element(mu, nu)
            if abs(v) > self.drop:
                out[mu] = v
        return dict(sorted(out.items(), key=lambda kv: encode(kv[0], self.spec)))

    def row(self, mu: ExcitationString) -> dict:
        """Nonzero ``M[mu, nu]`` as ``{nu: value}``; includes the nonlocal
        rank+2 entries ``nu = mu + kappa``."""
        self.check_rank(mu)
        dm, _ = self.det(mu)
        cands = self._neighbors_of(mu, dm.occ)
        if mu.rank + 2 <= self.m_max:
            taken_h, taken_p = set(mu.holes), set(mu.particles)
            for kappa, _ in self.local_doubles():
                if taken_h.isdisjoint(kappa.holes) and taken_p.isdisjoint(kappa.particles):
                    s = canonicalize(mu.holes + kappa.holes, mu.particles + kappa.particles)
                    cands.add(s.unsigned())
        out = {}
        for nu in cands:
            v = self.element(mu, nu)
            if abs(v) > self.drop:
                out[nu] = v
        return dict(sorted(out.items(), key=lambda kv: encode(kv[0], self.spec)))

    def rhs(self, mu: ExcitationString) -> float:
        self.check_rank(mu)
        if mu.rank > 2:
            return 0.0
        return -self.h0(mu)

    def rhs_vector(self) -> SparseState:
        """``b`` over all strings with nonzero ``<mu|H|0>``.  Singles vanish by
        the Brillouin condition, so only doubles appear."""
        b = SparseState(drop=self.drop)
        for s, v in self.local_doubles():
            b.entries[s] = -v
        return b.prune()

    def handle(self, cache: bool = True) -> OperatorHandle:
        h = OperatorHandle(self.spec, "lcc_liouvillian", self.column, row=self.row,
                           basis=lambda: full_basis(self.spec, range(1, self.m_max + 1)),
                           drop=self.drop, cache=cache,
                           dimension=sum(dimension(self.spec, k)
                                         for k in range(1, self.m_max + 1)))
        h.integrals = self.I
        h.liouvillian = self
        return h


def liouvillian_row(I: IntegralSet, spec: BasisSpec, mu: ExcitationString) -> dict:
    return Liouvillian(I, spec.m).row(mu)


def rhs(I: IntegralSet, spec: BasisSpec, mu: ExcitationString) -> float:
    return Liouvillian(I, spec.m).rhs(mu)


def mp2_guess(I: IntegralSet, spec: BasisSpec, tol: float = 1e-12,
              lv: Liouvillian | None = None) -> SparseState:
    """First-order doubles ``<kappa|H|0> / (f_ii + f_jj - f_aa - f_bb)``."""
    lv = lv or Liouvillian(I, spec.m)
    f = I.f
    t = SparseState(drop=lv.drop)
    for s, v in lv.local_doubles():
        (i, j), (a, b) = s.holes, s.particles
        D = f(i, i) + f(j, j) - f(a, a) - f(b, b)
        if abs(D) < tol:
            raise DegenerateDenominator(s, D)
        t.entries[s] = v / D
    return t.prune()


def correlation_energy(lv: Liouvillian, t: SparseState) -> float:
    """``<0|H T_2|0>`` with each canonical double counted once."""
    return float(sum(v * t[s] for s, v in lv.local_doubles()))


def lcc_solve(I: IntegralSet, spec: BasisSpec, tol: float = 1e-8,
              params: ConvergenceParams | None = None, threads: int = 1,
              drop: float = DEFAULT_DROP) -> tuple[SparseState, SolveReport]:
    """Solve the amplitude equations by restarted GMRES from the MP2 guess.

    Raises NotConverged (with ``.x`` and ``.report``) past the iteration cap
    ``10 sqrt(dim) + 200``.
    """
    if spec.m < 2:
        raise RankMismatch(f"LCC needs m_max >= 2 for the doubles manifold (got {spec.m})")
    lv = Liouvillian(I, spec.m, drop=drop)
    A = lv.handle()
    b = lv.rhs_vector()
    x0 = mp2_guess(I, spec, lv=lv)
    e_mp2 = correlation_energy(lv, x0)
    if params is None:
        dim = sum(dimension(spec, k) for k in range(1, spec.m + 1))
        params = ConvergenceParams(tol=tol, max_iter=int(10 * math.sqrt(dim) + 200))
    try:
        x, info = linear_solve(A, b, params, x0=x0, threads=threads)
    except NotConverged as exc:
        report = SolveReport(correlation_energy(lv, exc.x), exc.iterations, exc.residual,
                             False, list(exc.support_trace), e_mp2)
        exc.report = report
        raise
    report = SolveReport(correlation_energy(lv, x), info["iterations"], info["residual"],
                         True, info["support_trace"], e_mp2)
    return x, report


def _num(v):
    v = complex(v)
    return v.real if v.imag == 0 else v


def dump_amplitudes(t: SparseState, spec: BasisSpec, path) -> Path:
    """Lines ``t <rank> <holes...> <particles...> <value>`` sorted by key."""
    path = Path(path)
    rows = sorted(t.entries.items(), key=lambda kv: encode(kv[0], spec))
    lines = [f"t {s.rank} {' '.join(map(str, s.holes))} {' '.join(map(str, s.particles))} "
             f"{_num(v)!r}" for s, v in rows]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path


def dense_system(I: IntegralSet, m_max: int) -> tuple[np.ndarray, np.ndarray, list]:
    """Dense ``M`` and ``b`` over ranks ``1..m_max`` (oracle for tests)."""
    lv = Liouvillian(I, m_max)
    M, keys = lv.handle().dense()
    b = np.array([lv.rhs(s) for s in keys])
    return M, b, keys
