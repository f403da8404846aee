"""Support growth of repeated sparse matvecs from a single string.

After ``k`` products ``A^k e_mu`` is supported inside the lightcone of
``mu``: every quasiparticle sits within ``k * reach`` of a quasiparticle of
the same kind in ``mu``.  The probe records the support size, a tally of
multiply-adds and wall time per step.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path

import numpy as np

from .exbasis import DEFAULT_DROP, ExcitationString, SparseState
from .symbolic import CostExpr


class Aborted(RuntimeError):
    """Support exceeded the memory guard; ``trace`` holds the steps done."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


class LightconeViolation(AssertionError):
    pass


@dataclass
class SparsityTrace:
    m: int
    D: int
    R_c: float
    reach: float
    dimension: int
    start: ExcitationString
    nnz: list = field(default_factory=list)
    cum_ops: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    s_max: int = 0
    lightcone_checked: int = 0
    mode: str = "structural"

    @property
    def d(self) -> int:
        return len(self.nnz) - 1

    def rows(self):
        for k, (n, c, w) in enumerate(zip(self.nnz, self.cum_ops, self.wall_ms)):
            yield k, n, c, w

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "nnz", "cum_ops", "wall_ms"])
            for k, n, c, ms in self.rows():
                w.writerow([k, n, c, f"{ms:.3f}"])
        return path

    def to_dict(self, timings: bool = False) -> dict:
        out = {"m": self.m, "D": self.D, "R_c": self.R_c, "reach": self.reach,
               "dimension": self.dimension, "d": self.d, "s_max": self.s_max,
               "nnz": list(self.nnz), "cum_ops": list(self.cum_ops), "mode": self.mode,
               "lightcone_checked": self.lightcone_checked}
        if timings:
            out["wall_ms"] = list(self.wall_ms)
        return out


def within_lightcone(I, origin: ExcitationString, s: ExcitationString, radius: float) -> bool:
    """Can every quasiparticle of ``s`` be matched to a distinct one of the
    same kind in ``origin`` at distance <= radius?"""
    if s.rank != origin.rank:
        return False
    tol = radius + 1e-9
    for mine, theirs in ((s.holes, origin.holes), (s.particles, origin.particles)):
        if not any(all(I.distance(x, y) <= tol for x, y in zip(mine, perm))
                   for perm in permutations(theirs)):
            return False
    return True


def probe(handle, mu0: ExcitationString, d: int, max_support: int = 50_000_000,
          mode: str = "structural", check: bool = True, threads: int = 1) -> SparsityTrace:
    """Support of ``A^k e_mu0`` for ``k = 0..d``.

    ``structural`` mode follows the nonzero pattern (each column evaluated
    once); ``matvec`` mode runs real products with a zero drop threshold.
    ``cum_ops[k]`` counts multiply-adds spent in the first ``k`` products.
    """
    I = getattr(handle, "integrals", None)
    spec = handle.spec
    try:
        dim = handle.dimension()
    except NotImplementedError:
        dim = -1
    trace = SparsityTrace(spec.m, spec.D, getattr(I, "R_c", math.nan),
                          getattr(I, "reach", math.nan), dim, mu0, mode=mode)
    reach = trace.reach
    mu0 = mu0.unsigned()
    t0 = time.perf_counter()

    def checked(strings, k):
        if not check or I is None:
            return
        for s in strings:
            if s.rank == mu0.rank and not within_lightcone(I, mu0, s, k * reach):
                raise LightconeViolation(f"{s} outside radius {k * reach} of {mu0} after {k} steps")
            trace.lightcone_checked += 1

    def record(n, ops):
        trace.nnz.append(n)
        trace.cum_ops.append(ops)
        trace.wall_ms.append(1e3 * (time.perf_counter() - t0))

    if mode == "structural":
        support = {mu0}
        frontier = [mu0]
        ops_per_step = 0       # multiply-adds of one product over the current support
        cum = 0
        record(1, 0)
        for k in range(1, d + 1):
            for s in frontier:
                n = len(handle.column(s))
                ops_per_step += n
                trace.s_max = max(trace.s_max, n)
            cum += ops_per_step
            new = []
            for s in frontier:
                for t in handle.column(s):
                    if t not in support:
                        support.add(t)
                        new.append(t)
                        if len(support) > max_support:
                            record(len(support), cum)
                            raise Aborted(f"support {len(support)} exceeds guard {max_support}",
                                          trace)
            # support(k) = support(k-1) + columns(frontier): the diagonal keeps
            # old strings and their columns were absorbed in earlier steps
            checked(new, k)
            frontier = new
            record(len(support), cum)
            if len(support) > max_support:
                raise Aborted(f"support {len(support)} exceeds guard {max_support}", trace)
        return trace
    if mode != "matvec":
        raise ValueError(f"unknown probe mode {mode!r}")
    x = SparseState({mu0: 1.0}, drop=0.0)
    record(1, 0)
    ops0 = handle.n_ops
    for k in range(1, d + 1):
        for s in x.keys():
            trace.s_max = max(trace.s_max, len(handle.column(s)))
        x = handle.apply(x, threads=threads)
        nrm = x.norm()
        if nrm:
            x = x.scale(1.0 / nrm)
        checked(x.keys(), k)
        record(x.support, handle.n_ops - ops0)
        if x.support > max_support:
            raise Aborted(f"support {x.support} exceeds guard {max_support}", trace)
    return trace


@dataclass
class VolumeFit:
    exponent: float
    raw_exponent: float
    window: list
    variable: str


def fit_volume_exponent(trace: SparsityTrace, window: float = 0.1, min_points: int = 4,
                        variable: str = "diameter", tail: float = 0.5) -> VolumeFit:
    """Least-squares slope of ``log nnz`` over the asymptotic growth window.

    The window keeps steps ``k >= 1`` with ``nnz < window * dimension``
    (pre-saturation) and, of those, the last ``tail`` fraction (at least
    ``min_points``) so the small-``k`` transient does not bias the slope.
    ``variable='diameter'`` regresses against ``log(2 k R + 1)``, the linear
    extent of the region reachable in ``k`` steps of reach ``R``;
    ``variable='d'`` against ``log k``.  ``raw_exponent`` is the ``log k``
    slope over the whole pre-saturation window.
    """
    R = trace.reach if np.isfinite(trace.reach) else trace.R_c
    limit = window * trace.dimension if trace.dimension > 0 else math.inf
    pts = [(k, n) for k, n in enumerate(trace.nnz) if k >= 1 and n < limit]
    if len(pts) < min_points:
        raise ValueError(f"only {len(pts)} pre-saturation points (need {min_points})")
    ks_all = np.array([k for k, _ in pts], dtype=float)
    ys_all = np.log([n for _, n in pts])
    keep = max(min_points, math.ceil(tail * len(pts)))
    ks, ys = ks_all[-keep:], ys_all[-keep:]
    x = np.log(2 * ks * R + 1) if variable == "diameter" else np.log(ks)
    slope = np.polyfit(x, ys, 1)[0]
    raw = np.polyfit(np.log(ks_all), ys_all, 1)[0]
    return VolumeFit(float(slope), float(raw), [int(k) for k in ks], variable)


def classical_cost_expr(method: str, m: int, D: int, crystal: bool = False,
                        com_delocalized: bool = False) -> CostExpr:
    """``d^(2mD+1) R_c^((2m+1)D)``, times ``V`` for non-crystal LCC or a
    delocalized exciton centre of mass."""
    if method not in ("bse", "lcc"):
        raise ValueError(f"unknown method {method!r}")
    c = CostExpr(d=2 * m * D + 1, R_c=(2 * m + 1) * D)
    if (method == "lcc" and not crystal) or (method == "bse" and com_delocalized):
        c = c * CostExpr(V=1)
    return c


def cost_ratio(trace: SparsityTrace) -> float:
    """``sum_k nnz(k) * s_max / cum_ops``; between 1 and a small constant."""
    tot = trace.cum_ops[-1]
    if tot == 0:
        return 1.0
    return sum(trace.nnz[:-1]) * trace.s_max / tot
