"""Multi-exciton Bethe-Salpeter Hamiltonian (Tamm-Dancoff) in the string basis.

For a rank-m string with particles P and holes H the matrix is the pairwise
closure of the single-exciton kernel:

* one-body: ``f_ab`` for every particle, ``-f_ij`` for every hole;
* like pairs: ``W<ab||cd>`` between particles, ``W<ij||kl>`` between holes;
* unlike pairs: ``K(a, b, i, j) = V<aj|ib> - W<aj|bi>`` for particle
  ``b -> a`` and hole ``j -> i`` (bare exchange, screened direct term).

Only one quasiparticle changes per matrix element, except inside a
particle-hole pair where the K term moves both.  With ``multi_scatter`` the
two-particle and two-hole moves are added as well; for ``W = V`` that
reproduces the exact projection of ``H - E_HF`` onto the rank-m block.
Energies are excitation energies (no ``E_HF`` offset).
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .exbasis import (DEFAULT_DROP, BasisSpec, ExcitationString, RankMismatch,
                      basis as full_basis, dimension, sort_parity)
from .model import IntegralSet
from .operators import MAX_DENSE, OperatorHandle, TooLarge


def _replace(seq: tuple, old, new) -> tuple[tuple, int]:
    return sort_parity(tuple(new if x == old else x for x in seq))


def _replace2(seq: tuple, old: tuple, new: tuple) -> tuple[tuple, int]:
    m = dict(zip(old, new))
    return sort_parity(tuple(m.get(x, x) for x in seq))


class _Kernel:
    """Element formulas, bound to one integral set."""

    def __init__(self, I: IntegralSet):
        self.I = I
        self.f = I.f
        V, W = I.V, I.W
        self.V = V
        self.W = W

    def Wa(self, p, q, r, s):
        return self.W(p, q, r, s) - self.W(p, q, s, r)

    def K(self, a, b, i, j):
        """Particle ``b -> a`` with hole ``j -> i``."""
        return self.V(a, j, i, b) - self.W(a, j, b, i)


def exciton_row(I: IntegralSet, spec: BasisSpec, mu: ExcitationString,
                multi_scatter: bool = False, drop: float = DEFAULT_DROP,
                _kernel: _Kernel | None = None) -> dict:
    """Nonzero ``A[mu, nu]`` as ``{nu: value}`` (nu canonical, sign +1).

    The sign of ``mu`` itself is ignored: rows are for basis strings.
    """
    H, P = tuple(mu.holes), tuple(mu.particles)
    if len(H) != spec.m:
        raise RankMismatch(f"string of rank {len(H)} in the m={spec.m} manifold")
    k = _kernel or _Kernel(I)
    f, Wa, K = k.f, k.Wa, k.K
    nocc = spec.n_occ
    out: dict = {}

    def put(h, p, v):
        key = ExcitationString(h, p)
        out[key] = out.get(key, 0.0) + v

    diag = sum(f(a, a) for a in P) - sum(f(i, i) for i in H)
    for a, b in combinations(P, 2):
        diag += Wa(a, b, a, b)
    for i, j in combinations(H, 2):
        diag += Wa(i, j, i, j)
    for a in P:
        for i in H:
            diag += K(a, a, i, i)
    put(H, P, diag)

    Pset, Hset = set(P), set(H)
    nbrs = I.neighbors
    # one particle moves b -> a
    for b in P:
        for a in nbrs(b):
            if a < nocc or a in Pset:
                continue
            v = f(a, b)
            v += sum(Wa(a, c, b, c) for c in P if c != b)
            v += sum(K(a, b, i, i) for i in H)
            if abs(v) > drop:
                newP, s = _replace(P, b, a)
                put(H, newP, s * v)
    # one hole moves j -> i
    for j in H:
        for i in nbrs(j):
            if i >= nocc or i in Hset:
                continue
            v = -f(i, j)
            v += sum(Wa(i, l, j, l) for l in H if l != j)
            v += sum(K(a, a, i, j) for a in P)
            if abs(v) > drop:
                newH, s = _replace(H, j, i)
                put(newH, P, s * v)
    # a particle and a hole move together
    for b in P:
        near_b = set(nbrs(b))
        for j in H:
            if j not in near_b:
                continue
            for a in nbrs(b):
                if a < nocc or a in Pset:
                    continue
                for i in nbrs(j):
                    if i >= nocc or i in Hset:
                        continue
                    v = K(a, b, i, j)
                    if abs(v) > drop:
                        newP, sp = _replace(P, b, a)
                        newH, sh = _replace(H, j, i)
                        put(newH, newP, sp * sh * v)
    if multi_scatter:
        _two_quasiparticle(I, k, H, P, Hset, Pset, nocc, drop, put)
    return {key: v for key, v in out.items() if abs(v) > drop}


def _two_quasiparticle(I, k, H, P, Hset, Pset, nocc, drop, put):
    nbrs = I.neighbors
    Wa = k.Wa
    for b, c in combinations(P, 2):
        cand = sorted({a for a in nbrs(b) + nbrs(c) + (b, c)
                       if a >= nocc and (a not in Pset or a in (b, c))})
        for a, d in combinations(cand, 2):
            if {a, d} & {b, c}:
                continue
            v = Wa(a, d, b, c)
            if abs(v) > drop:
                newP, s = _replace2(P, (b, c), (a, d))
                put(H, newP, s * v)
    for j, l in combinations(H, 2):
        cand = sorted({i for i in nbrs(j) + nbrs(l) + (j, l)
                       if i < nocc and (i not in Hset or i in (j, l))})
        for i, n in combinations(cand, 2):
            if {i, n} & {j, l}:
                continue
            v = Wa(j, l, i, n)
            if abs(v) > drop:
                newH, s = _replace2(H, (j, l), (i, n))
                put(newH, P, s * v)


def bse_handle(I: IntegralSet, m: int, multi_scatter: bool = False,
               drop: float = DEFAULT_DROP, cache: bool = True) -> OperatorHandle:
    spec = I.spec(m)
    kern = _Kernel(I)

    def column(mu):
        return exciton_row(I, spec, mu, multi_scatter=multi_scatter, drop=drop, _kernel=kern)

    h = OperatorHandle(spec, "bse_A", column, symmetric=True,
                       basis=lambda: full_basis(spec, [m]), drop=drop, cache=cache,
                       dimension=dimension(spec, m))
    h.integrals = I
    h.multi_scatter = multi_scatter
    return h


def apply_A(handle: OperatorHandle, x, threads: int = 1):
    return handle.apply(x, threads=threads)


def assemble_dense(I: IntegralSet, spec: BasisSpec, multi_scatter: bool = False,
                   drop: float = DEFAULT_DROP) -> tuple[np.ndarray, list]:
    """Dense A over the canonical rank-m basis (test oracle)."""
    n = dimension(spec, spec.m)
    if n > MAX_DENSE:
        raise TooLarge(f"dimension {n} exceeds {MAX_DENSE}")
    keys = full_basis(spec, [spec.m])
    kern = _Kernel(I)
    index = {s: n for n, s in enumerate(keys)}
    A = np.zeros((len(keys), len(keys)))
    for r, mu in enumerate(keys):
        for nu, v in exciton_row(I, spec, mu, multi_scatter, drop, _kernel=kern).items():
            A[r, index[nu]] += v
    return A, keys


def sparsity_bound(spec: BasisSpec, R_c: float, D: int) -> int:
    """``2m (2 R_c + 1)^D + 1``: one scattering ball per quasiparticle plus the diagonal."""
    return int(2 * spec.m * (2 * R_c + 1) ** D + 1)
