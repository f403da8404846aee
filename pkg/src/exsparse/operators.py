"""Matrix-free operators over keyed sparse vectors.

A handle exposes column access (``A e_nu``); the matvec scatters
``y = sum_nu x_nu A[:, nu]``, so only the columns touching the support of
``x`` are ever evaluated.  For symmetric operators row and column coincide.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Hashable

import numpy as np

from .exbasis import DEFAULT_DROP, BasisSpec, SparseState

MAX_DENSE = 10_000


class TooLarge(RuntimeError):
    pass


class OperatorHandle:
    """Sparse operator defined by a column oracle ``key -> {key: value}``.

    ``s_max`` and ``max_abs`` are running maxima over every column (and row,
    when a row oracle is given and used) evaluated so far; ``alpha`` is their
    product, the subnormalization of a sparse-access block encoding.
    """

    def __init__(self, spec: BasisSpec | None, kind: str, column: Callable[[Hashable], dict],
                 row: Callable[[Hashable], dict] | None = None, symmetric: bool = False,
                 basis: Callable[[], list] | None = None, drop: float = DEFAULT_DROP,
                 cache: bool = True, dimension: int | None = None):
        self.spec = spec
        self.kind = kind
        self._column = column
        self._row = row if row is not None else (column if symmetric else None)
        self.symmetric = symmetric
        self._basis = basis
        self._dimension = dimension
        self.drop = drop
        self.cache = cache
        self._cols: dict = {}
        self._rows: dict = {}
        self.s_max = 0
        self.max_abs = 0.0
        self.n_matvec = 0
        self.n_ops = 0

    def _note(self, entries: dict) -> None:
        if len(entries) > self.s_max:
            self.s_max = len(entries)
        if entries:
            big = max(abs(v) for v in entries.values())
            if big > self.max_abs:
                self.max_abs = big

    def column(self, key) -> dict:
        got = self._cols.get(key)
        if got is None:
            got = self._column(key)
            self._note(got)
            if self.cache:
                self._cols[key] = got
        return got

    def row(self, key) -> dict:
        if self._row is None:
            raise NotImplementedError(f"{self.kind} handle has no row oracle")
        if self.symmetric:
            return self.column(key)
        got = self._rows.get(key)
        if got is None:
            got = self._row(key)
            self._note(got)
            if self.cache:
                self._rows[key] = got
        return got

    def clear_cache(self) -> None:
        self._cols.clear()
        self._rows.clear()

    @property
    def alpha(self) -> float:
        return self.s_max * self.max_abs

    def basis(self) -> list:
        if self._basis is None:
            raise NotImplementedError("handle has no enumerable basis")
        return self._basis()

    def dimension(self) -> int:
        if self._dimension is None:
            self._dimension = len(self.basis())
        return self._dimension

    # -- products ----------------------------------------------------------------

    def _scatter(self, items) -> tuple[dict, int]:
        out: dict = {}
        ops = 0
        for k, xv in items:
            col = self.column(k)
            ops += len(col)
            for j, a in col.items():
                out[j] = out.get(j, 0.0) + a * xv
        return out, ops

    def apply(self, x: SparseState, threads: int = 1) -> SparseState:
        """``A x``.  With ``threads > 1`` the support is split into contiguous
        chunks whose partial sums are merged in chunk order."""
        items = list(x.entries.items())
        if threads <= 1 or len(items) < 2 * threads:
            acc, ops = self._scatter(items)
        else:
            if self.cache:
                # fill the cache serially so workers only read it
                for k, _ in items:
                    self.column(k)
            step = -(-len(items) // threads)
            chunks = [items[i:i + step] for i in range(0, len(items), step)]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(self._scatter, chunks))
            acc, ops = {}, 0
            for part, n in parts:
                ops += n
                for j, v in part.items():
                    acc[j] = acc.get(j, 0.0) + v
        self.n_matvec += 1
        self.n_ops += ops
        y = SparseState(drop=x.drop)
        y.entries = acc
        return y.prune()

    __matmul__ = apply

    # -- dense views -------------------------------------------------------------

    def dense(self, keys: list | None = None) -> tuple[np.ndarray, list]:
        keys = self.basis() if keys is None else keys
        n = len(keys)
        if n > MAX_DENSE:
            raise TooLarge(f"dimension {n} exceeds dense limit {MAX_DENSE}")
        index = {k: i for i, k in enumerate(keys)}
        A = np.zeros((n, n))
        for c, k in enumerate(keys):
            for j, v in self.column(k).items():
                r = index.get(j)
                if r is None:
                    raise KeyError(f"column {k} reaches {j} outside the basis")
                A[r, c] += v
        return A, keys

    def scan(self) -> "OperatorHandle":
        """Evaluate every column (and row, if available) to settle s_max and max_abs."""
        for k in self.basis():
            self.column(k)
            if self._row is not None and not self.symmetric:
                self.row(k)
        return self

    def gershgorin(self, keys: list | None = None, margin: float = 0.01) -> tuple[float, float]:
        """Eigenvalue interval from Gershgorin discs (symmetric handles)."""
        keys = self.basis() if keys is None else keys
        lo, hi = np.inf, -np.inf
        for k in keys:
            col = self.column(k)
            d = col.get(k, 0.0)
            r = sum(abs(v) for j, v in col.items() if j != k)
            lo = min(lo, d - r)
            hi = max(hi, d + r)
        if not np.isfinite(lo):
            return -1.0, 1.0
        pad = margin * max(hi - lo, abs(hi), abs(lo), 1e-300)
        return lo - pad, hi + pad


class DenseHandle(OperatorHandle):
    """Handle backed by an explicit matrix; keys are ``0..n-1``."""

    def __init__(self, matrix, spec: BasisSpec | None = None, kind: str = "dense",
                 drop: float = 0.0):
        A = np.asarray(matrix)
        self.matrix = A
        n = A.shape[0]

        def column(k):
            col = A[:, k]
            return {int(j): col[j].item() for j in np.flatnonzero(np.abs(col) > drop)}

        def row(k):
            r = A[k]
            return {int(j): r[j].item() for j in np.flatnonzero(np.abs(r) > drop)}

        super().__init__(spec, kind, column, row=row, symmetric=bool(np.allclose(A, A.T.conj(), atol=0, rtol=0)),
                         basis=lambda: list(range(n)), drop=drop)


class ShiftedHandle(OperatorHandle):
    """``A + c * 1``."""

    def __init__(self, base: OperatorHandle, shift: float):
        self.base = base
        self.shift = shift

        def column(k):
            col = dict(base.column(k))
            col[k] = col.get(k, 0.0) + shift
            return {j: v for j, v in col.items() if abs(v) > base.drop}

        row = None
        if base._row is not None and not base.symmetric:
            def row(k):
                r = dict(base.row(k))
                r[k] = r.get(k, 0.0) + shift
                return {j: v for j, v in r.items() if abs(v) > base.drop}

        super().__init__(base.spec, base.kind, column, row=row, symmetric=base.symmetric,
                         basis=base._basis, drop=base.drop, cache=base.cache,
                         dimension=base._dimension)
