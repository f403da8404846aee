"""Excitation-string basis.

Orbitals are numbered ``0..L-1`` with the occupied (hole) block first:
holes take values in ``[0, n_occ)`` and particles in ``[n_occ, L)``.  A
string of rank ``k`` stands for

    sign * (c+_{a1} c_{i1}) (c+_{a2} c_{i2}) ... (c+_{ak} c_{ik}) |0>

with ``i1 > i2 > ...`` and ``a1 > a2 > ...``.  The pair bilinears commute,
so the product order is immaterial and reordering holes or particles only
costs the parity of the permutation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Iterable, Iterator, NamedTuple

import numpy as np

DEFAULT_DROP = 1e-14


class ExcitationError(ValueError):
    pass


class RepeatedIndex(ExcitationError):
    """Two equal indices in one list (Pauli exclusion)."""


class BadIndex(ExcitationError):
    pass


class InvalidExcitation(ExcitationError):
    pass


class RankMismatch(ExcitationError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    n_occ: int
    n_virt: int
    m: int
    D: int = 1

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("excitation rank must be non-negative")
        if self.n_occ < self.m or self.n_virt < self.m:
            raise ValueError(
                f"need n_occ >= m and n_virt >= m (got {self.n_occ}, {self.n_virt}, m={self.m})")
        if self.D < 1:
            raise ValueError("D must be >= 1")

    @property
    def L(self) -> int:
        return self.n_occ + self.n_virt

    @property
    def bits_per_index(self) -> int:
        return max(1, math.ceil(math.log2(self.L)))

    @property
    def rank_bits(self) -> int:
        return max(1, math.ceil(math.log2(self.m + 1)))

    def is_hole(self, p: int) -> bool:
        return 0 <= p < self.n_occ

    def is_particle(self, p: int) -> bool:
        return self.n_occ <= p < self.L


class ExcitationString(NamedTuple):
    holes: tuple
    particles: tuple
    sign: int = 1

    @property
    def rank(self) -> int:
        return len(self.holes)

    def unsigned(self) -> "ExcitationString":
        return self if self.sign == 1 else ExcitationString(self.holes, self.particles)

    def __str__(self):
        if not self.holes:
            return "|0>"
        s = "-" if self.sign < 0 else ""
        return f"{s}|{','.join(map(str, self.particles))} <- {','.join(map(str, self.holes))}>"


VACUUM = ExcitationString((), ())


def sort_parity(seq) -> tuple[tuple, int]:
    """Sort ``seq`` strictly decreasing; return (sorted tuple, permutation parity).

    Raises RepeatedIndex on duplicates.
    """
    items = list(seq)
    sign = 1
    # insertion sort: the swap count gives the parity and lists are short
    for k in range(1, len(items)):
        x = items[k]
        j = k - 1
        while j >= 0 and items[j] < x:
            items[j + 1] = items[j]
            sign = -sign
            j -= 1
        if j >= 0 and items[j] == x:
            raise RepeatedIndex(f"index {x} repeated")
        items[j + 1] = x
    return tuple(items), sign


def canonicalize(holes: Iterable[int], particles: Iterable[int],
                 spec: BasisSpec | None = None) -> ExcitationString:
    holes = tuple(holes)
    particles = tuple(particles)
    if len(holes) != len(particles):
        raise BadIndex(f"{len(holes)} holes but {len(particles)} particles")
    if spec is not None:
        if len(holes) > spec.m:
            raise RankMismatch(f"rank {len(holes)} exceeds m={spec.m}")
        for i in holes:
            if not spec.is_hole(i):
                raise BadIndex(f"hole index {i} outside [0, {spec.n_occ})")
        for a in particles:
            if not spec.is_particle(a):
                raise BadIndex(f"particle index {a} outside [{spec.n_occ}, {spec.L})")
    else:
        for p in holes + particles:
            if p < 0:
                raise BadIndex(f"negative index {p}")
    h, sh = sort_parity(holes)
    p, sp = sort_parity(particles)
    return ExcitationString(h, p, sh * sp)


def dimension(spec: BasisSpec, k: int) -> int:
    if not 0 <= k <= spec.m:
        raise RankMismatch(f"rank {k} outside 0..{spec.m}")
    return math.comb(spec.n_occ, k) * math.comb(spec.n_virt, k)


def iter_strings(spec: BasisSpec, k: int) -> Iterator[ExcitationString]:
    """All canonical rank-``k`` strings, ordered by (holes, particles)."""
    occ = range(spec.n_occ - 1, -1, -1)
    virt = range(spec.L - 1, spec.n_occ - 1, -1)
    for h in combinations(occ, k):
        for p in combinations(virt, k):
            yield ExcitationString(h, p)


def basis(spec: BasisSpec, ranks: Iterable[int] | None = None) -> list[ExcitationString]:
    ranks = [spec.m] if ranks is None else ranks
    return [s for k in ranks for s in iter_strings(spec, k)]


# -- bit packing ------------------------------------------------------------
# key = rank | hole_1 .. hole_m | particle_1 .. particle_m   (MSB -> LSB)

def encode(s: ExcitationString, spec: BasisSpec) -> int:
    k = len(s.holes)
    if k > spec.m:
        raise RankMismatch(f"rank {k} exceeds m={spec.m}")
    b = spec.bits_per_index
    key = k
    for slot in range(spec.m):
        key = (key << b) | (s.holes[slot] if slot < k else 0)
    for slot in range(spec.m):
        key = (key << b) | (s.particles[slot] if slot < k else 0)
    return key


def decode(key: int, spec: BasisSpec) -> ExcitationString:
    b = spec.bits_per_index
    mask = (1 << b) - 1
    fields = []
    for _ in range(2 * spec.m):
        fields.append(key & mask)
        key >>= b
    fields.reverse()
    k = key
    if k > spec.m:
        raise BadIndex(f"rank field {k} exceeds m={spec.m}")
    return ExcitationString(tuple(fields[:k]), tuple(fields[spec.m:spec.m + k]))


def key_width(spec: BasisSpec) -> int:
    return spec.rank_bits + 2 * spec.m * spec.bits_per_index


# -- determinants -------------------------------------------------------------

@dataclass(frozen=True)
class Determinant:
    """Occupation bit vector; bit p set means orbital p is occupied.

    The state is c+_{p1} c+_{p2} ... |vac> with p1 < p2 < ..., so acting with
    c_p or c+_p costs (-1)^(number of occupied orbitals below p).
    """
    occ: int
    L: int

    @classmethod
    def hartree_fock(cls, spec: BasisSpec) -> "Determinant":
        return cls((1 << spec.n_occ) - 1, spec.L)

    @classmethod
    def from_orbitals(cls, orbitals: Iterable[int], L: int) -> "Determinant":
        occ = 0
        for p in orbitals:
            occ |= 1 << p
        return cls(occ, L)

    def orbitals(self) -> list[int]:
        return [p for p in range(self.L) if self.occ >> p & 1]

    @property
    def n_electrons(self) -> int:
        return bin(self.occ).count("1")

    def bits(self) -> str:
        return "".join("1" if self.occ >> p & 1 else "0" for p in range(self.L))

    def __str__(self):
        return self.bits()


def _below(occ: int, p: int) -> int:
    return bin(occ & ((1 << p) - 1)).count("1")


def annihilate(occ: int, p: int) -> tuple[int, int]:
    if not occ >> p & 1:
        raise InvalidExcitation(f"orbital {p} is empty")
    return occ & ~(1 << p), -1 if _below(occ, p) & 1 else 1


def create(occ: int, p: int) -> tuple[int, int]:
    if occ >> p & 1:
        raise InvalidExcitation(f"orbital {p} is already filled")
    return occ | (1 << p), -1 if _below(occ, p) & 1 else 1


def to_determinant(s: ExcitationString, spec: BasisSpec) -> tuple[Determinant, int]:
    occ = Determinant.hartree_fock(spec).occ
    phase = s.sign
    # rightmost pair acts first
    for i, a in reversed(list(zip(s.holes, s.particles))):
        occ, ph = annihilate(occ, i)
        phase *= ph
        occ, ph = create(occ, a)
        phase *= ph
    return Determinant(occ, spec.L), phase


def from_determinant(det: Determinant, spec: BasisSpec) -> tuple[ExcitationString, int]:
    """Inverse of :func:`to_determinant`: the canonical string and the phase
    with ``|det> = phase * |string>``."""
    n = spec.n_occ
    holes = tuple(i for i in range(n - 1, -1, -1) if not det.occ >> i & 1)
    parts = tuple(a for a in range(spec.L - 1, n - 1, -1) if det.occ >> a & 1)
    if len(holes) != len(parts):
        raise InvalidExcitation("determinant does not conserve particle number")
    s = ExcitationString(holes, parts)
    _, phase = to_determinant(s, spec)
    return s, phase


# -- sparse amplitude vectors ---------------------------------------------------

class SparseState:
    """Amplitudes over basis keys (normally canonical strings with sign +1).

    Adding at a string whose sign is -1 adds the negated amplitude at the
    unsigned basis string.
    """

    __slots__ = ("entries", "drop")

    def __init__(self, entries: dict | None = None, drop: float = DEFAULT_DROP):
        self.drop = drop
        self.entries: dict = {}
        if entries:
            for k, v in entries.items():
                self.add(k, v)
            self.prune()

    @classmethod
    def unit(cls, key: Hashable, drop: float = DEFAULT_DROP) -> "SparseState":
        return cls({key: 1.0}, drop=drop)

    @classmethod
    def from_dense(cls, vec, keys: list, drop: float = DEFAULT_DROP) -> "SparseState":
        out = cls(drop=drop)
        for k, v in zip(keys, vec):
            if abs(v) > drop:
                out.entries[k] = v.item() if hasattr(v, "item") else v
        return out

    def add(self, key, amp) -> None:
        if isinstance(key, ExcitationString) and key.sign != 1:
            key, amp = key.unsigned(), -amp
        self.entries[key] = self.entries.get(key, 0.0) + amp

    def prune(self) -> "SparseState":
        d = self.drop
        self.entries = {k: v for k, v in self.entries.items() if abs(v) > d}
        return self

    @property
    def support(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, key):
        return self.entries.get(key, 0.0)

    def __iter__(self):
        return iter(self.entries.items())

    def copy(self) -> "SparseState":
        out = SparseState(drop=self.drop)
        out.entries = dict(self.entries)
        return out

    def scale(self, c) -> "SparseState":
        out = SparseState(drop=self.drop)
        out.entries = {k: c * v for k, v in self.entries.items()}
        return out.prune() if c == 0 else out

    def axpy(self, c, other: "SparseState") -> "SparseState":
        """Return self + c * other."""
        e = dict(self.entries)
        for k, v in other.entries.items():
            e[k] = e.get(k, 0.0) + c * v
        out = SparseState(drop=self.drop)
        out.entries = e
        return out.prune()

    def __add__(self, other):
        return self.axpy(1.0, other)

    def __sub__(self, other):
        return self.axpy(-1.0, other)

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def dot(self, other: "SparseState"):
        """<self|other> (conjugates self)."""
        a, b = (self.entries, other.entries)
        if len(a) > len(b):
            return sum(np.conj(a[k]) * v for k, v in b.items() if k in a)
        return sum(np.conj(v) * b[k] for k, v in a.items() if k in b)

    def norm(self) -> float:
        return math.sqrt(sum(abs(v) ** 2 for v in self.entries.values()))

    def to_dense(self, index: dict, dtype=float) -> np.ndarray:
        vec = np.zeros(len(index), dtype=dtype)
        for k, v in self.entries.items():
            vec[index[k]] = v
        return vec

    def keys(self):
        return self.entries.keys()

    def __repr__(self):
        return f"SparseState(support={self.support})"


# -- Slater-Condon rules ----------------------------------------------------------

def _orbitals(mask: int) -> list[int]:
    out = []
    p = 0
    while mask:
        if mask & 1:
            out.append(p)
        mask >>= 1
        p += 1
    return out


def slater_condon(d1: Determinant, d2: Determinant, I) -> float:
    """<d1|H|d2> for ``H = sum t_pq p+q + 1/2 sum V_pqrs p+q+sr``.

    ``I`` needs ``t(p, q)`` and ``V(p, q, r, s)`` (physicists' order).
    """
    if d1.n_electrons != d2.n_electrons:
        raise InvalidExcitation("determinants differ in particle number")
    diff = d1.occ ^ d2.occ
    n = bin(diff).count("1")
    if n > 4:
        return 0.0
    t, V = I.t, I.V
    if n == 0:
        occ = _orbitals(d1.occ)
        e = sum(t(p, p) for p in occ)
        for x, p in enumerate(occ):
            for q in occ[x + 1:]:
                e += V(p, q, p, q) - V(p, q, q, p)
        return e
    only1 = _orbitals(d1.occ & diff)
    only2 = _orbitals(d2.occ & diff)
    if n == 2:
        (p,), (q,) = only1, only2
        occ, s1 = annihilate(d2.occ, q)
        occ, s2 = create(occ, p)
        common = _orbitals(d1.occ & d2.occ)
        v = t(p, q) + sum(V(p, k, q, k) - V(p, k, k, q) for k in common)
        return s1 * s2 * v
    p1, p2 = only1
    q1, q2 = only2
    occ, s1 = annihilate(d2.occ, q1)
    occ, s2 = annihilate(occ, q2)
    occ, s3 = create(occ, p2)
    occ, s4 = create(occ, p1)
    return s1 * s2 * s3 * s4 * (V(p1, p2, q1, q2) - V(p1, p2, q2, q1))
