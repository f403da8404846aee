"""Integral providers: toy lattice semiconductor, periodic crystal, and files.

Two-electron integrals use physicists' order, ``V(p, q, r, s) = <pq|rs>``,
so that ``H = sum t_pq p+ q + 1/2 sum V_pqrs p+ q+ s r``.  In the lattice
models the element class is set by how many of the two transition
densities ``(p <- r)`` and ``(q <- s)`` are off-diagonal:

* none (``p == r`` and ``q == s``): charge-charge, ``U / (1 + r_pq)``,
  never truncated;
* one: charge-dipole, ``lambda_cd / (1 + r)**2``;
* two: dipole-dipole, ``lambda_dd / (1 + r)**3``;

where ``r`` is the distance between the centres of the two transition
densities, ``|(x_p + x_r)/2 - (x_q + x_s)/2|``.  The last two classes vanish
when the largest site distance among the four orbitals exceeds ``R_c``
(periodic cells: when no choice of images fits the four sites within
``R_c``; the smallest separation over fitting images is used).
Measuring the decay between density centres (rather than over the orbital
set) keeps ``<pq|rs> != <pq|sr>``, so antisymmetrized elements survive.  ``W = V / eps_screen``.
"""
from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .exbasis import BasisSpec


class ModelError(ValueError):
    pass


class ConfigError(ModelError):
    pass


class ParseError(ModelError):
    def __init__(self, msg, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class InconsistentIntegrals(ModelError):
    pass


@dataclass
class ModelConfig:
    D: int = 1
    n_sites: int = 4
    eps_gap: float = 2.0
    t_hop: float = 0.1
    U: float = 1.0
    eps_screen: float = 1.0
    lambda_cd: float = 0.1
    lambda_dd: float = 0.05
    R_c: float = 1.0
    R_loc: float = 1.0
    drop_threshold: float = 1e-14

    def validate(self) -> "ModelConfig":
        if self.D not in (1, 2, 3):
            raise ConfigError(f"D must be 1, 2 or 3 (got {self.D})")
        if self.n_sites < 1:
            raise ConfigError("n_sites must be >= 1")
        if not self.eps_gap > 0:
            raise ConfigError("eps_gap must be > 0")
        if not self.eps_screen >= 1:
            raise ConfigError("eps_screen must be >= 1")
        if not self.R_c >= 1:
            raise ConfigError("R_c must be >= 1")
        if not self.R_loc >= 0:
            raise ConfigError("R_loc must be >= 0")
        for name in ("t_hop", "U", "lambda_cd", "lambda_dd", "drop_threshold"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        return self

    def scaled(self, lam: float) -> "ModelConfig":
        """Copy with every two-electron amplitude multiplied by ``lam``."""
        d = asdict(self)
        for name in ("U", "lambda_cd", "lambda_dd"):
            d[name] *= lam
        return ModelConfig(**d)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d).validate()

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


class IntegralSet:
    """Element-wise access to t, V, W, f plus geometry."""

    mode = "abstract"

    def __init__(self, n_occ: int, L: int, D: int, positions: np.ndarray,
                 eps_screen: float = 1.0, R_c: float = math.inf, R_loc: float = 0.0):
        self.n_occ = n_occ
        self.L = L
        self.D = D
        self.positions = np.asarray(positions, dtype=float).reshape(L, D)
        self.eps_screen = eps_screen
        self.R_c = R_c
        self.R_loc = R_loc

    @property
    def n_virt(self) -> int:
        return self.L - self.n_occ

    def spec(self, m: int) -> BasisSpec:
        return BasisSpec(self.n_occ, self.n_virt, m, self.D)

    @property
    def reach(self) -> float:
        """Largest distance a single quasiparticle can hop in one matrix element."""
        return max(self.R_c, self.R_loc)

    def f(self, p: int, q: int) -> float:
        raise NotImplementedError

    def t(self, p: int, q: int) -> float:
        raise NotImplementedError

    def V(self, p: int, q: int, r: int, s: int) -> float:
        raise NotImplementedError

    def W(self, p: int, q: int, r: int, s: int) -> float:
        raise NotImplementedError

    def distance(self, p: int, q: int) -> float:
        return float(np.linalg.norm(self.positions[p] - self.positions[q]))

    def neighbors(self, p: int) -> tuple:
        """Orbitals ``q != p`` that may share a nonzero off-diagonal element with p."""
        raise NotImplementedError

    def nonzero_V(self, which: str = "V"):
        """Yield ``((p, q, r, s), value)`` for one representative of every
        8-fold symmetry orbit with a nonzero element."""
        raise NotImplementedError

    def dense_t(self) -> np.ndarray:
        L = self.L
        return np.array([[self.t(p, q) for q in range(L)] for p in range(L)])

    def dense_f(self) -> np.ndarray:
        L = self.L
        return np.array([[self.f(p, q) for q in range(L)] for p in range(L)])

    def dense_V(self, which: str = "V") -> np.ndarray:
        L = self.L
        if L > 40:
            raise ModelError("dense two-electron tensor only for L <= 40")
        get = self.V if which == "V" else self.W
        out = np.zeros((L,) * 4)
        for idx in itertools.product(range(L), repeat=4):
            out[idx] = get(*idx)
        return out

    def hf_energy(self) -> float:
        occ = range(self.n_occ)
        e = sum(self.t(i, i) for i in occ)
        e += 0.5 * sum(self.V(i, j, i, j) - self.V(i, j, j, i) for i in occ for j in occ)
        return e


def symmetry_images(p, q, r, s):
    """The 8 index tuples sharing a value for real 8-fold symmetric <pq|rs>."""
    return {(p, q, r, s), (q, p, s, r), (r, s, p, q), (s, r, q, p),
            (r, q, p, s), (q, r, s, p), (p, s, r, q), (s, p, q, r)}


def canonical_quad(p, q, r, s):
    return min(symmetry_images(p, q, r, s))


class LatticeIntegrals(IntegralSet):
    """Two orbitals per site: occupied orbital ``s`` and virtual ``N + s``.

    Elements are evaluated on demand from the per-site amplitudes, so memory
    is O(sites).  ``box`` turns on minimum-image distances.
    """

    def __init__(self, cfg: ModelConfig, coords: np.ndarray, box=None, mode="lattice"):
        cfg.validate()
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        N, D = coords.shape
        super().__init__(N, 2 * N, D, np.vstack([coords, coords]),
                         cfg.eps_screen, cfg.R_c, cfg.R_loc)
        self.cfg = cfg
        self.mode = mode
        self.n_sites = N
        self.coords = [tuple(c) for c in coords]
        self.box = None if box is None else tuple(float(b) for b in box)
        # four sites pairwise within R_c of each other unwrap uniquely when
        # every side exceeds 3 R_c; smaller cells need the image search
        self._unique_unwrap = box is None or all(b > 3 * cfg.R_c for b in self.box)
        self._nbr_sites: dict[int, tuple] = {}
        self._t_cache: dict = {}

    # geometry
    def site(self, p: int) -> int:
        return p if p < self.n_sites else p - self.n_sites

    def site_distance(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        ca, cb = self.coords[a], self.coords[b]
        if self.box is None:
            return math.dist(ca, cb)
        acc = 0.0
        for x, y, n in zip(ca, cb, self.box):
            dx = abs(x - y) % n
            dx = min(dx, n - dx)
            acc += dx * dx
        return math.sqrt(acc)

    def distance(self, p: int, q: int) -> float:
        return self.site_distance(self.site(p), self.site(q))

    def neighbor_sites(self, a: int) -> tuple:
        got = self._nbr_sites.get(a)
        if got is None:
            R = self.reach
            got = tuple(b for b in range(self.n_sites)
                        if b != a and self.site_distance(a, b) <= R + 1e-12)
            self._nbr_sites[a] = got
        return got

    def neighbors(self, p: int) -> tuple:
        a = self.site(p)
        N = self.n_sites
        out = [b for b in self.neighbor_sites(a)] + [b + N for b in self.neighbor_sites(a)]
        out.append(a + N if p < N else a)
        return tuple(sorted(out))

    # elements
    def f(self, p: int, q: int) -> float:
        N = self.n_sites
        if (p < N) != (q < N):
            return 0.0
        cfg = self.cfg
        if p == q:
            return -0.5 * cfg.eps_gap if p < N else 0.5 * cfg.eps_gap
        r = self.distance(p, q)
        if r <= cfg.R_loc + 1e-12 and cfg.t_hop:
            return cfg.t_hop * math.exp(-r / cfg.R_loc)
        return 0.0

    def t(self, p: int, q: int) -> float:
        key = (p, q) if p <= q else (q, p)
        val = self._t_cache.get(key)
        if val is None:
            val = self.f(p, q) - sum(self.V(p, i, q, i) - self.V(p, i, i, q)
                                     for i in range(self.n_occ))
            self._t_cache[key] = val
        return val

    def _disp(self, a: int, b: int) -> tuple:
        """Site displacement a - b (minimum image when periodic)."""
        ca, cb = self.coords[a], self.coords[b]
        if self.box is None:
            return tuple(x - y for x, y in zip(ca, cb))
        out = []
        for x, y, n in zip(ca, cb, self.box):
            dx = (x - y) % n
            out.append(dx - n if dx > n / 2 else dx)
        return tuple(out)

    def density_separation(self, p: int, q: int, r: int, s: int) -> float:
        """Distance between the centres of the transition densities p<-r and q<-s."""
        N = self.n_sites
        sp, sq, sr, ss = (x if x < N else x - N for x in (p, q, r, s))
        d1, d2 = self._disp(sp, sq), self._disp(sr, ss)
        return math.sqrt(sum((0.5 * (x + y)) ** 2 for x, y in zip(d1, d2)))

    def _wrapped_separation(self, sp: int, sq: int, sr: int, ss: int) -> float | None:
        """Periodic cells too small for a unique unwrapping: the smallest
        density separation over images of q, r, s (relative to p) that put
        all four sites within R_c of each other, or None if there is none."""
        R = self.cfg.R_c + 1e-12
        base = self.coords[sp]
        cands = []
        for x in (sq, sr, ss):
            per_axis = []
            for b, c, n in zip(base, self.coords[x], self.box):
                d = c - b
                ks = range(-math.ceil((R + abs(d)) / n), math.ceil((R + abs(d)) / n) + 1)
                per_axis.append([d + k * n for k in ks if abs(d + k * n) <= R])
            zero = tuple(0.0 for _ in base)
            cands.append([v for v in itertools.product(*per_axis) if math.dist(v, zero) <= R])
        best = None
        for xq in cands[0]:
            for xr in cands[1]:
                if math.dist(xq, xr) > R:
                    continue
                for xs in cands[2]:
                    if math.dist(xq, xs) > R or math.dist(xr, xs) > R:
                        continue
                    sep = math.sqrt(sum((0.5 * (a + c - b - e)) ** 2
                                        for a, b, c, e in zip(zero, xq, xr, xs)))
                    best = sep if best is None else min(best, sep)
        return best

    def V(self, p: int, q: int, r: int, s: int) -> float:
        cfg = self.cfg
        N = self.n_sites
        sp = p if p < N else p - N
        sq = q if q < N else q - N
        changed = int(p != r) + int(q != s)
        if changed == 0:
            return cfg.U / (1.0 + self.site_distance(sp, sq)) if cfg.U else 0.0
        amp = cfg.lambda_cd if changed == 1 else cfg.lambda_dd
        if not amp:
            return 0.0
        sr = r if r < N else r - N
        ss = s if s < N else s - N
        if self.box is not None and not self._unique_unwrap:
            sep = self._wrapped_separation(sp, sq, sr, ss)
            return 0.0 if sep is None else amp / (1.0 + sep) ** (changed + 1)
        sd = self.site_distance
        rho = max(sd(sp, sq), sd(sp, sr), sd(sp, ss), sd(sq, sr), sd(sq, ss), sd(sr, ss))
        if rho > cfg.R_c + 1e-12:
            return 0.0
        return amp / (1.0 + self.density_separation(p, q, r, s)) ** (changed + 1)

    def W(self, p: int, q: int, r: int, s: int) -> float:
        return self.V(p, q, r, s) / self.eps_screen

    def nonzero_V(self, which: str = "V"):
        get = self.V if which == "V" else self.W
        L = self.L
        seen = set()
        for p in range(L):
            for q in range(L):
                key = canonical_quad(p, q, p, q)
                if key not in seen:
                    seen.add(key)
                    v = get(p, q, p, q)
                    if v:
                        yield key, v
        for p in range(L):
            near = (p,) + self.neighbors(p)
            for q, r, s in itertools.product(near, repeat=3):
                if p == r and q == s:
                    continue
                key = canonical_quad(p, q, r, s)
                if key in seen:
                    continue
                seen.add(key)
                v = get(p, q, r, s)
                if v:
                    yield key, v


def grid_coords(n: int, D: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n), repeat=D)), dtype=float)


def build_lattice(cfg: ModelConfig) -> LatticeIntegrals:
    cfg.validate()
    return LatticeIntegrals(cfg, grid_coords(cfg.n_sites, cfg.D))


def build_crystal(cfg: ModelConfig) -> LatticeIntegrals:
    """Periodic lattice; every element depends only on relative displacement."""
    cfg.validate()
    return LatticeIntegrals(cfg, grid_coords(cfg.n_sites, cfg.D),
                            box=(cfg.n_sites,) * cfg.D, mode="crystal")


def build_sites(cfg: ModelConfig, coords) -> LatticeIntegrals:
    """Lattice-model physics on arbitrary site coordinates."""
    cfg.validate()
    return LatticeIntegrals(cfg, np.asarray(coords, dtype=float))


def decoupled_fragments(cfg: ModelConfig, P: int, gap: float | None = None) -> LatticeIntegrals:
    """``P`` copies of a ``cfg.n_sites`` chain, spaced beyond every cutoff."""
    if gap is None:
        gap = math.floor(max(cfg.R_c, cfg.R_loc)) + 2
    n = cfg.n_sites
    xs = [k * (n - 1 + gap) + x for k in range(P) for x in range(n)]
    return build_sites(cfg, np.array(xs, dtype=float)[:, None])


class TabulatedIntegrals(IntegralSet):
    """Integrals backed by sparse tables; missing entries are zero."""

    mode = "file"

    def __init__(self, n_occ: int, L: int, D: int, positions, t: dict, V: dict, W: dict,
                 eps_screen: float = 1.0, R_c: float = math.inf, R_loc: float = 0.0,
                 brillouin: str = "check"):
        super().__init__(n_occ, L, D, positions, eps_screen, R_c, R_loc)
        self._t = t
        self._V = V
        self._W = W
        adj = {p: set() for p in range(L)}
        for table in (t, V, W):
            for idx in table:
                for a in idx:
                    adj[a].update(idx)
        self._nbrs = {p: tuple(sorted(adj[p] - {p})) for p in range(L)}
        self._f = fock_from_tables(n_occ, L, t, V)
        occ, virt = slice(0, n_occ), slice(n_occ, L)
        worst = float(np.max(np.abs(self._f[occ, virt]), initial=0.0))
        if brillouin == "check" and worst > 1e-8:
            raise InconsistentIntegrals(
                f"occupied-virtual Fock block is not zero (max |f_ia| = {worst:.3e})")
        if brillouin in ("check", "zero"):
            self._f[occ, virt] = 0.0
            self._f[virt, occ] = 0.0

    @classmethod
    def from_arrays(cls, n_occ: int, t: np.ndarray, V: np.ndarray, W: np.ndarray | None = None,
                    positions=None, D: int = 1, brillouin: str = "off", **kw):
        L = t.shape[0]
        tt = {(p, q): float(t[p, q]) for p, q in zip(*np.nonzero(t))}
        VV = {tuple(int(x) for x in idx): float(V[idx]) for idx in zip(*np.nonzero(V))}
        WW = {} if W is None else {tuple(int(x) for x in idx): float(W[idx])
                                   for idx in zip(*np.nonzero(W))}
        pos = np.zeros((L, D)) if positions is None else positions
        return cls(n_occ, L, D, pos, tt, VV, WW, brillouin=brillouin, **kw)

    def f(self, p, q):
        return float(self._f[p, q])

    def t(self, p, q):
        return self._t.get((p, q), 0.0)

    def V(self, p, q, r, s):
        return self._V.get((p, q, r, s), 0.0)

    def W(self, p, q, r, s):
        return self._W.get((p, q, r, s), 0.0)

    def neighbors(self, p):
        return self._nbrs[p]

    def nonzero_V(self, which: str = "V"):
        table = self._V if which == "V" else self._W
        seen = set()
        for idx, v in table.items():
            key = canonical_quad(*idx)
            if key not in seen and v:
                seen.add(key)
                yield key, table[key] if key in table else v


def fock_from_tables(n_occ: int, L: int, t: dict, V: dict) -> np.ndarray:
    f = np.zeros((L, L))
    for (p, q), v in t.items():
        f[p, q] += v
    for (p, i, q, j), v in V.items():
        # f_pq += V_piqi - V_piiq over occupied i
        if i == j and i < n_occ:
            f[p, q] += v
        if i == q and i < n_occ:
            f[p, j] -= v
    return f


def fock(I: IntegralSet, check: bool = True, tol: float = 1e-10) -> np.ndarray:
    """Dense Fock matrix from ``f_pq = t_pq + sum_i (V_piqi - V_piiq)``.

    For lattice/crystal providers (which build f directly) the formula is
    cross-checked against the stored matrix.
    """
    L, n = I.L, I.n_occ
    f = np.empty((L, L))
    for p in range(L):
        for q in range(L):
            f[p, q] = I.t(p, q) + sum(I.V(p, i, q, i) - I.V(p, i, i, q) for i in range(n))
    if check and I.mode != "file":
        direct = I.dense_f()
        err = float(np.max(np.abs(direct - f)))
        if err > tol:
            raise InconsistentIntegrals(f"Fock formula disagrees with stored f by {err:.3e}")
    return f


def check_symmetry(table: dict, tol: float = 1e-10, name: str = "V") -> dict:
    """Complete ``table`` with all 8-fold images; raise on conflicting entries."""
    full = {}
    for idx, v in table.items():
        for img in symmetry_images(*idx):
            old = full.get(img)
            if old is not None and abs(old - v) > tol:
                raise InconsistentIntegrals(
                    f"{name}{list(img)} = {old!r} conflicts with {name}{list(idx)} = {v!r}")
            full[img] = v
    return full


# -- file format -----------------------------------------------------------------

_HEADER = re.compile(r"^exints\s+v1\s+(.*)$")


def dump_integrals(I: IntegralSet, path, with_W: bool = True) -> Path:
    path = Path(path)
    lines = [f"exints v1 L={I.L} nocc={I.n_occ} D={I.D} eps={I.eps_screen!r} "
             f"Rc={I.R_c!r} Rloc={I.R_loc!r}"]
    lines.append(f"# mode={I.mode}")
    for p in range(I.L):
        lines.append("pos " + str(p) + " " + " ".join(repr(float(x)) for x in I.positions[p]))
    for p in range(I.L):
        for q in range(p, I.L):
            v = I.t(p, q)
            if v:
                lines.append(f"t {p} {q} {v!r}")
    for which in (("V", "W") if with_W else ("V",)):
        for idx, v in sorted(I.nonzero_V(which)):
            lines.append(f"{which} {idx[0]} {idx[1]} {idx[2]} {idx[3]} {v!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _num(tok: str, lineno: int, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise ParseError(f"bad number {tok!r}", lineno) from None


def parse_integrals(text: str, brillouin: str = "check") -> TabulatedIntegrals:
    header = None
    pos: dict = {}
    t: dict = {}
    V: dict = {}
    W: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            m = _HEADER.match(line)
            if not m:
                raise ParseError("expected header 'exints v1 L=<int> nocc=<int> D=<int>'", lineno)
            header = {}
            for tok in m.group(1).split():
                if "=" not in tok:
                    raise ParseError(f"bad header field {tok!r}", lineno)
                k, v = tok.split("=", 1)
                header[k] = v
            for req in ("L", "nocc", "D"):
                if req not in header:
                    raise ParseError(f"header missing {req}=", lineno)
            L = _num(header["L"], lineno, int)
            nocc = _num(header["nocc"], lineno, int)
            D = _num(header["D"], lineno, int)
            if not (0 < nocc < L) or D < 1:
                raise ParseError("header needs 0 < nocc < L and D >= 1", lineno)
            continue
        tok = line.split()
        kind = tok[0]

        def idx(n):
            if len(tok) != n + 2:
                raise ParseError(f"'{kind}' needs {n} indices and a value", lineno)
            out = tuple(_num(x, lineno, int) for x in tok[1:n + 1])
            for p in out:
                if not 0 <= p < L:
                    raise ParseError(f"orbital index {p} out of range", lineno)
            return out, _num(tok[-1], lineno)

        if kind == "pos":
            if not 3 <= len(tok) <= 2 + D:
                raise ParseError("'pos' needs an index and up to D coordinates", lineno)
            p = _num(tok[1], lineno, int)
            if not 0 <= p < L:
                raise ParseError(f"orbital index {p} out of range", lineno)
            xyz = [_num(x, lineno) for x in tok[2:]]
            pos[p] = xyz + [0.0] * (D - len(xyz))
        elif kind == "t":
            (p, q), v = idx(2)
            for key in ((p, q), (q, p)):
                if key in t and abs(t[key] - v) > 1e-10:
                    raise InconsistentIntegrals(f"t{list(key)} conflicts (line {lineno})")
                t[key] = v
        elif kind in ("V", "W"):
            key, v = idx(4)
            table = V if kind == "V" else W
            if key in table and abs(table[key] - v) > 1e-10:
                raise InconsistentIntegrals(f"{kind}{list(key)} conflicts (line {lineno})")
            table[key] = v
        else:
            raise ParseError(f"unknown record {kind!r}", lineno)
    if header is None:
        raise ParseError("empty integral file", 1)
    V = check_symmetry(V, name="V")
    W = check_symmetry(W, name="W")
    positions = np.array([pos.get(p, [0.0] * D) for p in range(L)], dtype=float)
    kw = {}
    for key, name in (("eps", "eps_screen"), ("Rc", "R_c"), ("Rloc", "R_loc")):
        if key in header:
            kw[name] = _num(header[key], 1)
    return TabulatedIntegrals(nocc, L, D, positions, t, V, W, brillouin=brillouin, **kw)


def load_integrals(path, brillouin: str = "check") -> TabulatedIntegrals:
    return parse_integrals(Path(path).read_text(), brillouin=brillouin)
