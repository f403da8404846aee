"""Krylov kernels over sparse keyed vectors.

All kernels talk to operators only through ``handle.apply`` so the matvec
count is the cost metric.  Iteration counts below are matvec counts, with
one exception: a solve that is already converged at entry reports 1 (the
residual check).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from .exbasis import SparseState


class NotConverged(RuntimeError):
    """Iteration cap hit.  ``x`` holds the best iterate found."""

    def __init__(self, msg, x=None, iterations=0, residual=math.inf, value=None,
                 support_trace=()):
        super().__init__(msg)
        self.x = x
        self.iterations = iterations
        self.residual = residual
        self.value = value
        self.support_trace = list(support_trace)
        self.report = None


@dataclass
class ConvergenceParams:
    tol: float = 1e-8
    max_iter: int = 1000
    gap_estimate: float | None = None
    overlap: float | None = None
    C: float = 1.0
    restart: int = 50
    cheb_cutoff: float = 1e-12

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.overlap is not None and not 0 < self.overlap <= 1:
            raise ValueError("overlap must lie in (0, 1]")
        if self.gap_estimate is not None and not self.gap_estimate > 0:
            raise ValueError("gap_estimate must be > 0")


def predicted_iterations(p: ConvergenceParams) -> int:
    """``ceil(C ln(1/(tol gamma)) / Delta)``, floored at 1.  Bookkeeping only."""
    if p.gap_estimate is None:
        raise ValueError("predicted_iterations needs gap_estimate")
    gamma = 1.0 if p.overlap is None else p.overlap
    raw = p.C / p.gap_estimate * math.log(1.0 / (p.tol * gamma))
    # guard against ln() landing a hair above an integer
    return max(1, math.ceil(raw - 1e-12))


def _orthogonalize(w: SparseState, Q: list, passes: int = 2) -> tuple[SparseState, np.ndarray]:
    h = np.zeros(len(Q), dtype=complex)
    for _ in range(passes):
        for j, q in enumerate(Q):
            c = q.dot(w)
            if c != 0:
                h[j] += c
                w = w.axpy(-c, q)
    return w, h


def _real_if_close(h: np.ndarray):
    return h.real if np.all(np.abs(h.imag) <= 1e-14 * max(1.0, np.abs(h).max(initial=0))) else h


# -- eigenvalues ----------------------------------------------------------------------

def lowest_eigenpairs(handle, v0: SparseState, p: ConvergenceParams | None = None,
                      k: int = 1, threads: int = 1, max_dim: int | None = None):
    """Lanczos with full reorthogonalization for the ``k`` lowest Ritz pairs.

    Returns ``(values, vectors, iterations)``; residuals ``||Av - ev||`` are
    below ``p.tol`` for each pair.
    """
    p = p or ConvergenceParams()
    nrm = v0.norm()
    if nrm == 0:
        raise ValueError("start vector is zero")
    if max_dim is None:
        try:
            max_dim = handle.dimension()
        except NotImplementedError:
            max_dim = p.max_iter
    cap = min(p.max_iter, max_dim)
    Q = [v0.scale(1.0 / nrm)]
    alphas: list[float] = []
    betas: list[float] = []
    it = 0
    theta = y = None
    while True:
        w = handle.apply(Q[-1], threads=threads)
        it += 1
        a = Q[-1].dot(w).real
        w, _ = _orthogonalize(w.axpy(-a, Q[-1]), Q)
        alphas.append(a)
        b = w.norm()
        theta, y = _ritz(alphas, betas)
        kk = min(k, len(theta))
        res = np.abs(b * y[-1, :kk])
        if (kk == k and np.all(res <= p.tol)) or b <= 1e-14 * max(1.0, abs(a)):
            break
        if it >= cap:
            vals, vecs = _assemble(Q, theta, y, kk)
            raise NotConverged(f"Lanczos did not converge in {it} iterations",
                               x=vecs[0], iterations=it, residual=float(res.max()),
                               value=vals[0])
        betas.append(b)
        Q.append(w.scale(1.0 / b))
    kk = min(k, len(theta))
    vals, vecs = _assemble(Q, theta, y, kk)
    return vals, vecs, it


def _ritz(alphas, betas):
    a = np.array(alphas)
    if len(a) == 1:
        return a.copy(), np.ones((1, 1))
    return eigh_tridiagonal(a, np.array(betas))


def _assemble(Q, theta, y, k):
    vals, vecs = [], []
    for c in range(k):
        v = SparseState(drop=Q[0].drop)
        for coef, q in zip(y[:, c], Q):
            v = v.axpy(coef, q)
        vals.append(float(theta[c]))
        vecs.append(v.scale(1.0 / v.norm()))
    return vals, vecs


def lowest_eigenpair(handle, v0: SparseState, p: ConvergenceParams | None = None,
                     threads: int = 1):
    vals, vecs, it = lowest_eigenpairs(handle, v0, p, k=1, threads=threads)
    return vals[0], vecs[0], it


# -- linear systems ---------------------------------------------------------------------

def linear_solve(handle, b: SparseState, p: ConvergenceParams | None = None,
                 x0: SparseState | None = None, threads: int = 1):
    """Restarted GMRES for ``A x = b`` to relative residual ``p.tol``.

    Returns ``(x, info)`` with ``info`` holding ``iterations``, ``residual``
    (final 2-norm), ``history`` (residual after every matvec) and
    ``support_trace`` (support of each new Krylov vector).
    """
    p = p or ConvergenceParams()
    drop = b.drop
    bnorm = b.norm()
    x = SparseState(drop=drop) if x0 is None else x0.copy()
    history: list[float] = []
    trace: list[int] = []
    if bnorm == 0:
        return SparseState(drop=drop), {"iterations": 1, "residual": 0.0,
                                        "history": [0.0], "support_trace": [0]}
    target = p.tol * bnorm
    it = 0
    if x0 is not None and x0.support:
        r = b - handle.apply(x, threads=threads)
        it += 1
    else:
        r = b.copy()
    beta = r.norm()
    history.append(beta)
    best = (beta, x)
    while beta > target:
        if it >= p.max_iter:
            raise NotConverged(f"GMRES did not reach {p.tol:g} in {it} iterations",
                               x=best[1], iterations=it, residual=best[0],
                               support_trace=trace)
        V = [r.scale(1.0 / beta)]
        m = p.restart
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        k = 0
        while k < m and it < p.max_iter:
            w = handle.apply(V[k], threads=threads)
            it += 1
            w, h = _orthogonalize(w, V)
            H[:k + 1, k] = h
            hn = w.norm()
            H[k + 1, k] = hn
            trace.append(w.support)
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -np.conj(sn[j]) * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            cs[k], sn[k] = _givens(H[k, k], H[k + 1, k])
            H[k, k], H[k + 1, k] = _rotate(cs[k], sn[k], H[k, k], H[k + 1, k])
            g[k], g[k + 1] = _rotate(cs[k], sn[k], g[k], g[k + 1])
            k += 1
            history.append(float(abs(g[k])))
            if abs(g[k]) <= target or hn <= 1e-300:
                break
            V.append(w.scale(1.0 / hn))
        yk = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
        yk = _real_if_close(yk)
        for j in range(k):
            if yk[j] != 0:
                x = x.axpy(yk[j].item() if hasattr(yk[j], "item") else yk[j], V[j])
        r = b - handle.apply(x, threads=threads)
        beta = r.norm()
        if beta < best[0]:
            best = (beta, x)
        if beta > target and it >= p.max_iter:
            raise NotConverged(f"GMRES did not reach {p.tol:g} in {it} iterations",
                               x=best[1], iterations=it, residual=best[0],
                               support_trace=trace)
    return x, {"iterations": max(1, it), "residual": beta, "history": history,
               "support_trace": trace}


def _givens(a, b):
    """Rotation zeroing ``b`` against ``a`` (``b`` real and non-negative)."""
    den = math.hypot(abs(a), abs(b))
    if den == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    return abs(a) / den, (a / abs(a)) * np.conj(b) / den


def _rotate(c, s, a, b):
    """Apply the Givens rotation [[c, s], [-conj(s), c]] to (a, b)."""
    return c * a + s * b, -np.conj(s) * a + c * b


# -- dynamics -----------------------------------------------------------------------------

def chebyshev_order(h_T: float, cutoff: float) -> int:
    """Smallest K beyond ``h T`` with ``|J_k(h T)| < cutoff`` for k = K, K+1, K+2."""
    k = max(1, int(math.ceil(h_T)))
    while True:
        if all(abs(jv(k + j, h_T)) < cutoff for j in range(3)):
            return k
        k += 1


def propagate(handle, v0: SparseState, T: float, p: ConvergenceParams | None = None,
              bounds: tuple[float, float] | None = None, threads: int = 1,
              return_info: bool = False):
    """``exp(-i A T) v0`` by Chebyshev expansion on the Gershgorin interval."""
    p = p or ConvergenceParams()
    lo, hi = bounds if bounds is not None else handle.gershgorin()
    c = 0.5 * (hi + lo)
    h = 0.5 * (hi - lo)
    phase = complex(math.cos(c * T), -math.sin(c * T))
    if h <= 0 or T == 0:
        out = v0.scale(phase)
        return (out, {"order": 0, "matvecs": 0}) if return_info else out
    hT = h * T
    K = chebyshev_order(hT, p.cheb_cutoff)
    if K > p.max_iter:
        raise NotConverged(f"Chebyshev order {K} exceeds cap {p.max_iter}", x=v0, iterations=0)
    coef = [(2.0 if k else 1.0) * (-1j) ** k * jv(k, hT) for k in range(K + 1)]

    def scaled(v):
        return handle.apply(v, threads=threads).axpy(-c, v).scale(1.0 / h)

    prev = v0
    cur = scaled(v0)
    acc = v0.scale(coef[0]).axpy(coef[1], cur)
    for k in range(2, K + 1):
        nxt = scaled(cur).scale(2.0).axpy(-1.0, prev)
        acc = acc.axpy(coef[k], nxt)
        prev, cur = cur, nxt
    out = acc.scale(phase)
    if return_info:
        return out, {"order": K, "matvecs": K}
    return out


# -- norms -----------------------------------------------------------------------------------

def power_norm(handle, v0: SparseState | None = None, iters: int = 200, tol: float = 1e-10,
               seed: int = 0) -> float:
    """Estimate ``||A||_2`` by power iteration on ``A^T A`` (``A^2`` if symmetric).

    The estimate increases monotonically towards the true norm from below.
    """
    if v0 is None:
        rng = np.random.default_rng(seed)
        keys = handle.basis()
        v0 = SparseState.from_dense(rng.standard_normal(len(keys)), keys)
    v = v0.scale(1.0 / v0.norm())
    est = 0.0
    for _ in range(iters):
        w = handle.apply(v)
        w = handle.apply(w) if handle.symmetric else apply_transpose(handle, w)
        n = w.norm()
        if n == 0:
            return 0.0
        new = math.sqrt(n)
        v = w.scale(1.0 / n)
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est


def apply_transpose(handle, x: SparseState) -> SparseState:
    """``A^T x`` through the row oracle."""
    acc: dict = {}
    for k, xv in x.entries.items():
        for j, a in handle.row(k).items():
            acc[j] = acc.get(j, 0.0) + a * xv
    y = SparseState(drop=x.drop)
    y.entries = acc
    return y.prune()
